#include <doctest.h>

#include <cmath>
#include <numeric>
#include <string>
#include <vector>

#include "oracles.hpp"
#include "random_data.hpp"
#include "tilepop/error.hpp"
#include "tilepop/explain.hpp"
#include "tilepop/gbtree.hpp"

using namespace tilepop;

namespace {

Tree stump(int feature, double thr, double nl, double nr, double wl, double wr) {
    Tree t;
    t.nodes.resize(3);
    t.nodes[0].feature = feature;
    t.nodes[0].threshold = thr;
    t.nodes[0].left = 1;
    t.nodes[0].right = 2;
    t.nodes[0].cover = nl + nr;
    t.nodes[1].cover = nl;
    t.nodes[1].weight = wl;
    t.nodes[2].cover = nr;
    t.nodes[2].weight = wr;
    return t;
}

Dataset rows_of(const std::vector<std::vector<double>>& xs) {
    Dataset ds;
    for (std::size_t c = 0; c < xs[0].size(); ++c) ds.feature_names.push_back("f" + std::to_string(c));
    for (std::size_t r = 0; r < xs.size(); ++r) {
        ds.tile_ids.push_back(TileId{r + 100});
        ds.x.insert(ds.x.end(), xs[r].begin(), xs[r].end());
        ds.target.push_back(0.0);
    }
    return ds;
}

std::vector<std::size_t> all_rows(const Dataset& ds) {
    std::vector<std::size_t> r(ds.rows());
    std::iota(r.begin(), r.end(), std::size_t{0});
    return r;
}

}  // namespace

TEST_SUITE("explain") {
    TEST_CASE("single leaf: zero attributions, base includes the leaf") {
        Ensemble e;
        e.base_score = 1.5;
        e.learning_rate = 0.2;
        e.feature_names = {"f0", "f1"};
        Tree t;
        t.nodes.resize(1);
        t.nodes[0].weight = 3.0;
        t.nodes[0].cover = 10.0;
        e.trees.push_back(t);
        const Dataset ds = rows_of({{0.1, 0.2}, {0.5, 0.9}});
        const ShapMatrix sm = tree_shap(e, ds, all_rows(ds));
        CHECK(sm.base_value == doctest::Approx(1.5 + 0.2 * 3.0));
        for (double v : sm.phi) CHECK(v == 0.0);
        for (double v : brute_force_shap(t, ds.row(0), 2)) CHECK(v == 0.0);
    }

    TEST_CASE("depth-1 tree: two-player closed form") {
        const double nl = 30, nr = 10, wl = 2.0, wr = -1.0, eta = 0.5;
        Ensemble e;
        e.base_score = 0.25;
        e.learning_rate = eta;
        e.feature_names = {"f0", "f1", "f2"};
        e.trees.push_back(stump(1, 0.5, nl, nr, wl, wr));
        const Dataset ds = rows_of({{9.0, 0.2, 9.0}, {9.0, 0.8, 9.0}});
        const ShapMatrix sm = tree_shap(e, ds, all_rows(ds));
        const double mean = (nl * wl + nr * wr) / (nl + nr);
        CHECK(sm.at(0, 1) == doctest::Approx(eta * (wl - mean)).epsilon(1e-14));
        CHECK(sm.at(1, 1) == doctest::Approx(eta * (wr - mean)).epsilon(1e-14));
        CHECK(sm.at(0, 0) == 0.0);
        CHECK(sm.at(0, 2) == 0.0);
        CHECK(sm.base_value == doctest::Approx(0.25 + eta * mean).epsilon(1e-14));
        const auto bf = brute_force_shap(e.trees[0], ds.row(0), 3);
        CHECK(bf[1] == doctest::Approx(wl - mean).epsilon(1e-14));
        CHECK(tree_expected_value(e.trees[0]) == doctest::Approx(mean));
    }

    TEST_CASE("random depth-3 trees agree with subset enumeration") {
        SplitMix64 rng(21);
        for (int trial = 0; trial < 40; ++trial) {
            const Tree t = fixture::random_tree(rng, 3, 6);
            for (int r = 0; r < 50; ++r) {
                std::vector<double> row(6);
                for (double& v : row) v = rng.uniform();
                std::vector<double> phi(6, 0.0);
                tree_shap_single(t, row, phi);
                const auto want = oracle::shapley(t, row, 6);
                const auto bf = brute_force_shap(t, row, 6);
                for (std::size_t f = 0; f < 6; ++f) {
                    CHECK(std::abs(phi[f] - want[f]) <= 1e-9);
                    CHECK(std::abs(bf[f] - want[f]) <= 1e-9);
                }
            }
        }
    }

    TEST_CASE("repeated features along a path") {
        // Root and its left child both split on feature 0.
        Tree t;
        t.nodes.resize(5);
        t.nodes[0] = {0, 0.5, 1, 4, true, 1.0, 0.0, 100.0};
        t.nodes[1] = {0, 0.2, 2, 3, true, 1.0, 0.0, 60.0};
        t.nodes[2] = {-1, 0.0, -1, -1, true, 0.0, 1.0, 20.0};
        t.nodes[3] = {-1, 0.0, -1, -1, true, 0.0, 2.0, 40.0};
        t.nodes[4] = {-1, 0.0, -1, -1, true, 0.0, -3.0, 40.0};
        for (double x : {0.1, 0.3, 0.7}) {
            const std::vector<double> row{x};
            std::vector<double> phi(1, 0.0);
            tree_shap_single(t, row, phi);
            CHECK(phi[0] == doctest::Approx(oracle::walk(t, 0, row) - tree_expected_value(t)).epsilon(1e-12));
        }
    }

    TEST_CASE("local accuracy on a trained ensemble") {
        const Dataset ds = fixture::random_dataset(300, 6, 5);
        TrainConfig cfg;
        cfg.n_rounds = 60;
        cfg.max_depth = 5;
        cfg.early_stopping_rounds = 0;
        const TrainResult r = train(ds, fixture::all_train(ds), cfg);
        const auto rows = all_rows(ds);
        const ShapMatrix sm = tree_shap(r.ensemble, ds, rows);
        CHECK(local_accuracy_error(sm, r.ensemble, ds, rows) <= 1e-6);
        for (std::size_t i = 0; i < ds.rows(); ++i) {
            double s = sm.base_value;
            for (double v : sm.row(i)) s += v;
            CHECK(std::abs(s - oracle::predict_z(r.ensemble, ds.row(i))) <= 1e-6);
        }
    }

    TEST_CASE("trees without covers are rejected") {
        Ensemble e;
        e.feature_names = {"f0"};
        Tree t = stump(0, 0.5, 0, 0, 1, 2);
        e.trees.push_back(t);
        const Dataset ds = rows_of({{0.1}});
        CHECK_THROWS_AS(tree_shap(e, ds, all_rows(ds)), ValidationError);
        const Dataset wrong = rows_of({{0.1, 0.2}});
        e.trees[0] = stump(0, 0.5, 1, 1, 1, 2);
        CHECK_THROWS_AS(tree_shap(e, wrong, all_rows(wrong)), ValidationError);
    }

    TEST_CASE("brute force refuses wide trees") {
        // Right-leaning chain of 13 splits on distinct features, each with a leaf on the left.
        Tree t;
        const int depth = 13;
        for (int f = 0; f < depth; ++f) {
            const auto here = static_cast<std::int32_t>(t.nodes.size());
            TreeNode n;
            n.feature = f;
            n.threshold = 0.5;
            n.left = here + 1;
            n.right = here + 2;
            n.cover = static_cast<double>(depth - f + 1);
            t.nodes.push_back(n);
            TreeNode leaf;
            leaf.cover = 1.0;
            t.nodes.push_back(leaf);
        }
        TreeNode last;
        last.cover = 1.0;
        t.nodes.push_back(last);
        const std::vector<double> row(depth, 0.0);
        CHECK_THROWS_AS(brute_force_shap(t, row, depth), ValidationError);
    }

    TEST_CASE("dependence series is sorted by feature value") {
        ShapMatrix sm;
        sm.feature_names = {"f0", "f1"};
        sm.tile_ids = {TileId{100}, TileId{101}};
        sm.phi = {0.3, 0.0, 0.1, 0.0};  // row 0: f0 = 2, row 1: f0 = 1
        const Dataset ds = rows_of({{2.0, 5.0}, {1.0, 5.0}});
        const DependenceSeries s = dependence_series(sm, ds, "f0");
        REQUIRE(s.size() == 2);
        CHECK(s[0].feature_value == 1.0);
        CHECK(s[0].phi == 0.1);
        CHECK(s[1].feature_value == 2.0);
        CHECK(s[1].phi == 0.3);
        CHECK_THROWS_AS(dependence_series(sm, ds, "nope"), ValidationError);
    }

    TEST_CASE("a constant feature is a dummy") {
        Dataset ds = fixture::random_dataset(200, 4, 8);
        for (std::size_t r = 0; r < ds.rows(); ++r) ds.x[r * 4 + 2] = 7.0;
        TrainConfig cfg;
        cfg.n_rounds = 30;
        cfg.early_stopping_rounds = 0;
        const TrainResult tr = train(ds, fixture::all_train(ds), cfg);
        const ShapMatrix sm = tree_shap(tr.ensemble, ds, all_rows(ds));
        const DependenceSeries s = dependence_series(sm, ds, "f2");
        for (const auto& p : s) {
            CHECK(p.feature_value == 7.0);
            CHECK(p.phi == 0.0);
        }
    }

    TEST_CASE("CSV writers") {
        ShapMatrix sm;
        sm.base_value = 0.5;
        sm.feature_names = {"a", "b"};
        sm.tile_ids = {TileId{3}};
        sm.phi = {0.25, -1.0};
        CHECK(write_shap_csv(sm) == "tile_id,base,phi_a,phi_b\n3,0.5,0.25,-1\n");
        const DependenceSeries s{{TileId{3}, 2.0, 0.25}};
        CHECK(write_dependence_csv(s) == "tile_id,feature_value,phi\n3,2,0.25\n");
    }
}

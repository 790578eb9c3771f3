#include "tilepop/explain.hpp"

#include <algorithm>
#include <cmath>
#include <bit>
#include <cstdint>

#include "tilepop/error.hpp"
#include "tilepop/io.hpp"

namespace tilepop {

namespace {

struct PathElement {
    int feature = -1;
    double zero_fraction = 0.0;
    double one_fraction = 0.0;
    double pweight = 0.0;
};

void extend_path(PathElement* path, std::size_t depth, double zero_fraction, double one_fraction, int feature) {
    path[depth] = {feature, zero_fraction, one_fraction, depth == 0 ? 1.0 : 0.0};
    const auto d1 = static_cast<double>(depth + 1);
    for (std::size_t k = depth; k-- > 0;) {
        path[k + 1].pweight += one_fraction * path[k].pweight * static_cast<double>(k + 1) / d1;
        path[k].pweight = zero_fraction * path[k].pweight * static_cast<double>(depth - k) / d1;
    }
}

void unwind_path(PathElement* path, std::size_t depth, std::size_t index) {
    const double one = path[index].one_fraction;
    const double zero = path[index].zero_fraction;
    const auto d1 = static_cast<double>(depth + 1);
    double next = path[depth].pweight;
    for (std::size_t k = depth; k-- > 0;) {
        if (one != 0.0) {
            const double tmp = path[k].pweight;
            path[k].pweight = next * d1 / (static_cast<double>(k + 1) * one);
            next = tmp - path[k].pweight * zero * static_cast<double>(depth - k) / d1;
        } else {
            path[k].pweight = path[k].pweight * d1 / (zero * static_cast<double>(depth - k));
        }
    }
    for (std::size_t k = index; k < depth; ++k) {
        path[k].feature = path[k + 1].feature;
        path[k].zero_fraction = path[k + 1].zero_fraction;
        path[k].one_fraction = path[k + 1].one_fraction;
    }
}

double unwound_path_sum(const PathElement* path, std::size_t depth, std::size_t index) {
    const double one = path[index].one_fraction;
    const double zero = path[index].zero_fraction;
    const auto d1 = static_cast<double>(depth + 1);
    double next = path[depth].pweight;
    double total = 0.0;
    for (std::size_t k = depth; k-- > 0;) {
        if (one != 0.0) {
            const double tmp = next * d1 / (static_cast<double>(k + 1) * one);
            total += tmp;
            next = path[k].pweight - tmp * zero * static_cast<double>(depth - k) / d1;
        } else if (zero != 0.0) {
            total += path[k].pweight / zero / (static_cast<double>(depth - k) / d1);
        }
    }
    return total;
}

bool goes_left(const TreeNode& n, std::span<const double> row) {
    const double v = row[static_cast<std::size_t>(n.feature)];
    return std::isnan(v) ? n.default_left : v < n.threshold;
}

void recurse(const Tree& tree, std::span<const double> row, std::span<double> phi, std::size_t node_index,
             std::size_t depth, PathElement* parent_path, double parent_zero, double parent_one, int parent_feature) {
    PathElement* path = parent_path + depth + 1;
    std::copy(parent_path, parent_path + depth + 1, path);
    extend_path(path, depth, parent_zero, parent_one, parent_feature);

    const TreeNode& node = tree.nodes[node_index];
    if (node.is_leaf()) {
        for (std::size_t k = 1; k <= depth; ++k) {
            const double w = unwound_path_sum(path, depth, k);
            const PathElement& el = path[k];
            phi[static_cast<std::size_t>(el.feature)] += w * (el.one_fraction - el.zero_fraction) * node.weight;
        }
        return;
    }
    const bool left = goes_left(node, row);
    const auto hot = static_cast<std::size_t>(left ? node.left : node.right);
    const auto cold = static_cast<std::size_t>(left ? node.right : node.left);
    const double hot_zero = tree.nodes[hot].cover / node.cover;
    const double cold_zero = tree.nodes[cold].cover / node.cover;
    double incoming_zero = 1.0;
    double incoming_one = 1.0;

    std::size_t k = 0;
    for (; k <= depth; ++k) {
        if (path[k].feature == node.feature) break;
    }
    if (k != depth + 1) {
        incoming_zero = path[k].zero_fraction;
        incoming_one = path[k].one_fraction;
        unwind_path(path, depth, k);
        --depth;
    }
    recurse(tree, row, phi, hot, depth + 1, path, hot_zero * incoming_zero, incoming_one, node.feature);
    recurse(tree, row, phi, cold, depth + 1, path, cold_zero * incoming_zero, 0.0, node.feature);
}

void check_covers(const Tree& tree) {
    if (tree.nodes.empty() || !(tree.nodes[0].cover > 0.0)) {
        throw ValidationError("ensemble lacks cover counts needed for path-dependent SHAP");
    }
    for (const TreeNode& n : tree.nodes) {
        if (!n.is_leaf() && !(n.cover > 0.0)) {
            throw ValidationError("ensemble has an internal node with zero cover");
        }
    }
}

double expected_from(const Tree& t, std::size_t i) {
    const TreeNode& n = t.nodes[i];
    if (n.is_leaf()) return n.weight;
    const TreeNode& l = t.nodes[static_cast<std::size_t>(n.left)];
    const TreeNode& r = t.nodes[static_cast<std::size_t>(n.right)];
    return (l.cover * expected_from(t, static_cast<std::size_t>(n.left)) +
            r.cover * expected_from(t, static_cast<std::size_t>(n.right))) /
           n.cover;
}

// Conditional expectation given that the features flagged in `known` take the row's values.
double conditional_value(const Tree& t, std::size_t i, std::span<const double> row, const std::vector<bool>& known) {
    const TreeNode& n = t.nodes[i];
    if (n.is_leaf()) return n.weight;
    const auto l = static_cast<std::size_t>(n.left);
    const auto r = static_cast<std::size_t>(n.right);
    if (known[static_cast<std::size_t>(n.feature)]) {
        return conditional_value(t, goes_left(n, row) ? l : r, row, known);
    }
    return (t.nodes[l].cover * conditional_value(t, l, row, known) +
            t.nodes[r].cover * conditional_value(t, r, row, known)) /
           n.cover;
}

std::size_t max_depth(const Tree& t) { return t.depth(); }

}  // namespace

double tree_expected_value(const Tree& tree) {
    check_covers(tree);
    return expected_from(tree, 0);
}

void tree_shap_single(const Tree& tree, std::span<const double> row, std::span<double> phi) {
    check_covers(tree);
    const std::size_t d = max_depth(tree) + 2;
    std::vector<PathElement> buffer((d + 1) * (d + 2) / 2 + d + 2);
    recurse(tree, row, phi, 0, 0, buffer.data(), 1.0, 1.0, -1);
}

ShapMatrix tree_shap(const Ensemble& e, const Dataset& ds, std::span<const std::size_t> rows) {
    if (ds.cols() != e.n_features()) throw ValidationError("dataset and ensemble disagree on the feature count");
    ShapMatrix sm;
    sm.feature_names = e.feature_names;
    double expected = 0.0;
    std::size_t deepest = 0;
    for (const Tree& t : e.trees) {
        expected += tree_expected_value(t);
        deepest = std::max(deepest, t.depth());
    }
    sm.base_value = e.base_score + e.learning_rate * expected;

    const std::size_t p = e.n_features();
    sm.phi.assign(rows.size() * p, 0.0);
    const std::size_t d = deepest + 2;
    std::vector<PathElement> buffer((d + 1) * (d + 2) / 2 + d + 2);
    for (std::size_t k = 0; k < rows.size(); ++k) {
        const std::size_t r = rows[k];
        sm.tile_ids.push_back(ds.tile_ids[r]);
        std::span<double> phi(sm.phi.data() + k * p, p);
        for (const Tree& t : e.trees) recurse(t, ds.row(r), phi, 0, 0, buffer.data(), 1.0, 1.0, -1);
        for (double& v : phi) v *= e.learning_rate;
    }
    return sm;
}

std::vector<double> brute_force_shap(const Tree& tree, std::span<const double> row, std::size_t n_features) {
    check_covers(tree);
    std::vector<std::size_t> used;
    for (const TreeNode& n : tree.nodes) {
        if (!n.is_leaf()) used.push_back(static_cast<std::size_t>(n.feature));
    }
    std::sort(used.begin(), used.end());
    used.erase(std::unique(used.begin(), used.end()), used.end());
    const std::size_t k = used.size();
    if (k > 12) throw ValidationError("brute-force Shapley values need a tree with at most 12 features");

    std::vector<double> phi(n_features, 0.0);
    if (k == 0) return phi;
    std::vector<double> fact(k + 1, 1.0);
    for (std::size_t i = 1; i <= k; ++i) fact[i] = fact[i - 1] * static_cast<double>(i);

    const std::uint32_t subsets = 1u << k;
    std::vector<double> value(subsets);
    std::vector<bool> known(n_features, false);
    for (std::uint32_t mask = 0; mask < subsets; ++mask) {
        for (std::size_t j = 0; j < k; ++j) known[used[j]] = ((mask >> j) & 1u) != 0;
        value[mask] = conditional_value(tree, 0, row, known);
    }
    for (std::size_t j = 0; j < k; ++j) {
        double s = 0.0;
        for (std::uint32_t mask = 0; mask < subsets; ++mask) {
            if ((mask >> j) & 1u) continue;
            const auto size = static_cast<std::size_t>(std::popcount(mask));
            const double w = fact[size] * fact[k - size - 1] / fact[k];
            s += w * (value[mask | (1u << j)] - value[mask]);
        }
        phi[used[j]] = s;
    }
    return phi;
}

double local_accuracy_error(const ShapMatrix& sm, const Ensemble& e, const Dataset& ds,
                            std::span<const std::size_t> rows) {
    double worst = 0.0;
    for (std::size_t k = 0; k < rows.size(); ++k) {
        double total = sm.base_value;
        for (double v : sm.row(k)) total += v;
        worst = std::max(worst, std::abs(total - e.predict_z(ds.row(rows[k]))));
    }
    return worst;
}

namespace {

DependenceSeries make_series(const ShapMatrix& sm, std::size_t shap_col, const std::vector<TileId>& ids,
                             const std::vector<double>& x, std::size_t stride, std::size_t x_col) {
    std::vector<std::size_t> row_of;
    row_of.reserve(sm.rows());
    {
        // Map explained tiles back to their data rows.
        std::vector<std::pair<TileId, std::size_t>> index;
        index.reserve(ids.size());
        for (std::size_t r = 0; r < ids.size(); ++r) index.emplace_back(ids[r], r);
        std::sort(index.begin(), index.end());
        for (TileId t : sm.tile_ids) {
            auto it = std::lower_bound(index.begin(), index.end(), std::pair<TileId, std::size_t>{t, 0});
            if (it == index.end() || it->first != t) {
                throw DataError("tile " + std::to_string(t.value) + " of the SHAP matrix is not in the feature data");
            }
            row_of.push_back(it->second);
        }
    }
    DependenceSeries out;
    out.reserve(sm.rows());
    for (std::size_t k = 0; k < sm.rows(); ++k) {
        out.push_back({sm.tile_ids[k], x[row_of[k] * stride + x_col], sm.at(k, shap_col)});
    }
    std::sort(out.begin(), out.end(), [](const DependencePoint& a, const DependencePoint& b) {
        if (a.feature_value != b.feature_value) return a.feature_value < b.feature_value;
        return a.tile < b.tile;
    });
    return out;
}

std::size_t shap_column(const ShapMatrix& sm, std::string_view name) {
    auto it = std::find(sm.feature_names.begin(), sm.feature_names.end(), name);
    if (it == sm.feature_names.end()) throw ValidationError("unknown feature '" + std::string(name) + "'");
    return static_cast<std::size_t>(it - sm.feature_names.begin());
}

}  // namespace

DependenceSeries dependence_series(const ShapMatrix& sm, const Dataset& ds, std::string_view feature) {
    const std::size_t sc = shap_column(sm, feature);
    const auto dc = ds.column_of(feature);
    if (!dc) throw ValidationError("unknown feature '" + std::string(feature) + "'");
    return make_series(sm, sc, ds.tile_ids, ds.x, ds.cols(), *dc);
}

DependenceSeries dependence_series(const ShapMatrix& sm, const FeatureMatrix& fm, const FeatureKey& key) {
    const std::string name = key.name();
    const std::size_t sc = shap_column(sm, name);
    const auto fc = fm.column_of(key);
    if (!fc) throw ValidationError("unknown feature '" + name + "'");
    return make_series(sm, sc, fm.tile_ids, fm.values, fm.cols(), *fc);
}

std::string write_shap_csv(const ShapMatrix& sm) {
    std::string out = "tile_id,base";
    for (const auto& n : sm.feature_names) out += ",phi_" + n;
    out += '\n';
    for (std::size_t r = 0; r < sm.rows(); ++r) {
        out += std::to_string(sm.tile_ids[r].value);
        out += ',';
        append_double(out, sm.base_value);
        for (double v : sm.row(r)) {
            out += ',';
            append_double(out, v);
        }
        out += '\n';
    }
    return out;
}

std::string write_dependence_csv(const DependenceSeries& series) {
    std::string out = "tile_id,feature_value,phi\n";
    for (const auto& p : series) {
        out += std::to_string(p.tile.value);
        out += ',';
        append_double(out, p.feature_value);
        out += ',';
        append_double(out, p.phi);
        out += '\n';
    }
    return out;
}

}  // namespace tilepop

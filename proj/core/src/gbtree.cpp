#include "tilepop/gbtree.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <nlohmann/json.hpp>
#include <numeric>

#include "tilepop/error.hpp"

namespace tilepop {

using nlohmann::json;

double Tree::predict(std::span<const double> row) const {
    std::size_t i = 0;
    while (!nodes[i].is_leaf()) {
        const TreeNode& n = nodes[i];
        const double v = row[static_cast<std::size_t>(n.feature)];
        const bool left = std::isnan(v) ? n.default_left : v < n.threshold;
        i = static_cast<std::size_t>(left ? n.left : n.right);
    }
    return nodes[i].weight;
}

namespace {

std::size_t depth_from(const Tree& t, std::size_t i) {
    const TreeNode& n = t.nodes[i];
    if (n.is_leaf()) return 0;
    return 1 + std::max(depth_from(t, static_cast<std::size_t>(n.left)), depth_from(t, static_cast<std::size_t>(n.right)));
}

}  // namespace

std::size_t Tree::depth() const { return nodes.empty() ? 0 : depth_from(*this, 0); }

void Tree::validate(std::size_t n_features) const {
    if (nodes.empty()) throw ValidationError("tree has no nodes");
    std::vector<int> refs(nodes.size(), 0);
    for (std::size_t i = 0; i < nodes.size(); ++i) {
        const TreeNode& n = nodes[i];
        if (!std::isfinite(n.cover) || n.cover < 0.0) throw ValidationError("tree node has an invalid cover");
        if (n.is_leaf()) {
            if (!std::isfinite(n.weight)) throw ValidationError("leaf weight is not finite");
            continue;
        }
        if (static_cast<std::size_t>(n.feature) >= n_features) throw ValidationError("split feature out of range");
        if (!std::isfinite(n.threshold)) throw ValidationError("split threshold is not finite");
        for (auto c : {n.left, n.right}) {
            if (c <= static_cast<std::int32_t>(i) || static_cast<std::size_t>(c) >= nodes.size()) {
                throw ValidationError("tree child index out of range");
            }
            ++refs[static_cast<std::size_t>(c)];
        }
    }
    for (std::size_t i = 1; i < refs.size(); ++i) {
        if (refs[i] != 1) throw ValidationError("tree node is not reachable exactly once");
    }
}

double Ensemble::predict_z(std::span<const double> row) const {
    double s = 0.0;
    for (const Tree& t : trees) s += t.predict(row);
    return base_score + learning_rate * s;
}

void TrainConfig::validate() const {
    if (max_depth == 0 || max_depth > 30) throw ValidationError("max_depth must be in [1, 30]");
    if (n_rounds == 0) throw ValidationError("n_rounds must be positive");
    if (!(learning_rate > 0.0 && learning_rate <= 1.0)) throw ValidationError("learning rate must be in (0, 1]");
    if (!(lambda >= 0.0) || !std::isfinite(lambda)) throw ValidationError("lambda must be non-negative");
    if (!(gamma >= 0.0) || !std::isfinite(gamma)) throw ValidationError("gamma must be non-negative");
    if (!(min_child_weight >= 0.0) || !std::isfinite(min_child_weight)) {
        throw ValidationError("min_child_weight must be non-negative");
    }
    if (n_bins < 2) throw ValidationError("n_bins must be at least 2");
}

json train_config_to_json(const TrainConfig& c) {
    return {{"max_depth", c.max_depth},
            {"n_rounds", c.n_rounds},
            {"learning_rate", c.learning_rate},
            {"lambda", c.lambda},
            {"gamma", c.gamma},
            {"min_child_weight", c.min_child_weight},
            {"split_mode", c.mode == SplitMode::Exact ? "exact" : "histogram"},
            {"n_bins", c.n_bins},
            {"early_stopping_rounds", c.early_stopping_rounds},
            {"seed", c.seed}};
}

TrainConfig train_config_from_json(const json& j) {
    TrainConfig c;
    try {
        c.max_depth = j.value("max_depth", c.max_depth);
        c.n_rounds = j.value("n_rounds", c.n_rounds);
        c.learning_rate = j.value("learning_rate", j.value("eta", c.learning_rate));
        c.lambda = j.value("lambda", c.lambda);
        c.gamma = j.value("gamma", c.gamma);
        c.min_child_weight = j.value("min_child_weight", c.min_child_weight);
        const std::string mode = j.value("split_mode", std::string("histogram"));
        if (mode == "exact") {
            c.mode = SplitMode::Exact;
        } else if (mode == "histogram") {
            c.mode = SplitMode::Histogram;
        } else {
            throw ValidationError("split_mode must be 'exact' or 'histogram'");
        }
        c.n_bins = j.value("n_bins", c.n_bins);
        c.early_stopping_rounds = j.value("early_stopping_rounds", c.early_stopping_rounds);
        c.seed = j.value("seed", c.seed);
    } catch (const json::exception& e) {
        throw ValidationError(std::string("invalid train config: ") + e.what());
    }
    c.validate();
    return c;
}

json eval_report_to_json(const EvalReport& r) {
    json curve = json::array();
    for (const auto& s : r.curve) {
        curve.push_back({{"train_loss", s.train_loss}, {"train_rmsle", s.train_rmsle}, {"test_rmsle", s.test_rmsle}});
    }
    return {{"rmsle", {{"train", r.rmsle_train}, {"test", r.rmsle_test}, {"validation", r.rmsle_validation}}},
            {"best_round", r.best_round},
            {"curve", std::move(curve)}};
}

namespace {

double cut_between(double a, double b) {
    const double m = std::midpoint(a, b);
    return m > a ? m : b;
}

}  // namespace

std::vector<double> feature_cuts(std::vector<double> values, SplitMode mode, std::size_t n_bins) {
    std::sort(values.begin(), values.end());
    values.erase(std::unique(values.begin(), values.end()), values.end());
    const std::size_t d = values.size();
    std::vector<double> cuts;
    if (d < 2) return cuts;
    if (mode == SplitMode::Exact || d <= n_bins) {
        cuts.reserve(d - 1);
        for (std::size_t k = 1; k < d; ++k) cuts.push_back(cut_between(values[k - 1], values[k]));
    } else {
        cuts.reserve(n_bins - 1);
        for (std::size_t k = 1; k < n_bins; ++k) {
            const std::size_t idx = k * d / n_bins;
            cuts.push_back(cut_between(values[idx - 1], values[idx]));
        }
    }
    return cuts;
}

double rmsle(std::span<const double> pred, std::span<const double> truth) {
    if (pred.size() != truth.size()) throw ValidationError("rmsle: length mismatch");
    if (pred.empty()) throw ValidationError("rmsle: empty input");
    double s = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        if (!(pred[i] >= 0.0) || !(truth[i] >= 0.0)) throw ValidationError("rmsle: negative or NaN input");
        const double d = std::log1p(pred[i]) - std::log1p(truth[i]);
        s += d * d;
    }
    return std::sqrt(s / static_cast<double>(pred.size()));
}

double predict(const Ensemble& e, std::span<const double> row) {
    if (row.size() != e.n_features()) {
        throw ValidationError("row has " + std::to_string(row.size()) + " features, ensemble expects " +
                              std::to_string(e.n_features()));
    }
    return std::max(0.0, std::exp(e.predict_z(row)) - 1.0);
}

std::vector<double> predict_rows(const Ensemble& e, const Dataset& ds, std::span<const std::size_t> rows) {
    std::vector<double> out;
    out.reserve(rows.size());
    for (std::size_t r : rows) out.push_back(predict(e, ds.row(r)));
    return out;
}

namespace {

constexpr std::uint32_t kNoBin = std::numeric_limits<std::uint32_t>::max();

// Node under construction, in creation order.
struct BuildNode {
    double g = 0.0;
    double h = 0.0;
    std::size_t depth = 0;
    int feature = -1;
    std::uint32_t split_bin = 0;
    double threshold = 0.0;
    double gain = 0.0;
    std::int32_t left = -1;
    std::int32_t right = -1;
};

struct Candidate {
    double gain = 0.0;
    int feature = -1;
    std::uint32_t bin = 0;
};

class Booster {
public:
    Booster(const Dataset& ds, const Split& split, const TrainConfig& cfg) : ds_(ds), split_(split), cfg_(cfg) {
        n_ = split.train.size();
        p_ = ds.cols();
        z_.resize(n_);
        for (std::size_t i = 0; i < n_; ++i) z_[i] = std::log1p(ds.target[split.train[i]]);

        cuts_.resize(p_);
        bins_.resize(p_);
        order_.resize(p_);
        std::vector<double> col(n_);
        for (std::size_t f = 0; f < p_; ++f) {
            for (std::size_t i = 0; i < n_; ++i) {
                col[i] = ds.at(split.train[i], f);
                if (!std::isfinite(col[i])) throw DataError("feature " + ds.feature_names[f] + " has a non-finite value");
            }
            cuts_[f] = feature_cuts(col, cfg.mode, cfg.n_bins);
            auto& bins = bins_[f];
            bins.resize(n_);
            std::size_t nb = cuts_[f].size() + 1;
            std::vector<std::uint32_t> counts(nb + 1, 0);
            for (std::size_t i = 0; i < n_; ++i) {
                bins[i] = static_cast<std::uint32_t>(std::upper_bound(cuts_[f].begin(), cuts_[f].end(), col[i]) -
                                                     cuts_[f].begin());
                ++counts[bins[i] + 1];
            }
            // Counting sort by bin, stable in row position.
            std::partial_sum(counts.begin(), counts.end(), counts.begin());
            auto& ord = order_[f];
            ord.resize(n_);
            for (std::size_t i = 0; i < n_; ++i) ord[counts[bins[i]]++] = static_cast<std::uint32_t>(i);
        }
    }

    TrainResult run() {
        TrainResult result;
        Ensemble& e = result.ensemble;
        e.learning_rate = cfg_.learning_rate;
        e.feature_names = ds_.feature_names;
        double zsum = 0.0;
        for (double z : z_) zsum += z;
        e.base_score = zsum / static_cast<double>(n_);

        std::vector<double> pred(n_, e.base_score);
        const auto& test = split_.test;
        std::vector<double> test_pred(test.size(), e.base_score);
        std::vector<double> test_z(test.size());
        for (std::size_t i = 0; i < test.size(); ++i) test_z[i] = std::log1p(ds_.target[test[i]]);

        double best = std::numeric_limits<double>::infinity();
        std::size_t best_round = 0;
        std::vector<std::int32_t> leaf_of(n_);
        for (std::size_t round = 0; round < cfg_.n_rounds; ++round) {
            Tree tree = grow(pred, leaf_of);
            for (std::size_t i = 0; i < n_; ++i) {
                pred[i] += cfg_.learning_rate * tree.nodes[static_cast<std::size_t>(leaf_of[i])].weight;
            }
            for (std::size_t i = 0; i < test.size(); ++i) {
                test_pred[i] += cfg_.learning_rate * tree.predict(ds_.row(test[i]));
            }
            e.trees.push_back(std::move(tree));

            RoundStats st;
            double se = 0.0;
            double sl = 0.0;
            for (std::size_t i = 0; i < n_; ++i) {
                const double d = pred[i] - z_[i];
                se += d * d;
                const double dl = std::max(0.0, pred[i]) - z_[i];
                sl += dl * dl;
            }
            st.train_loss = 0.5 * se;
            st.train_rmsle = std::sqrt(sl / static_cast<double>(n_));
            if (!test.empty()) {
                double st_sum = 0.0;
                for (std::size_t i = 0; i < test.size(); ++i) {
                    const double d = std::max(0.0, test_pred[i]) - test_z[i];
                    st_sum += d * d;
                }
                st.test_rmsle = std::sqrt(st_sum / static_cast<double>(test.size()));
            }
            result.report.curve.push_back(st);

            if (test.empty() || cfg_.early_stopping_rounds == 0) {
                best_round = round + 1;
                continue;
            }
            if (st.test_rmsle < best) {
                best = st.test_rmsle;
                best_round = round + 1;
            } else if (round + 1 - best_round >= cfg_.early_stopping_rounds) {
                break;
            }
        }
        best_round = std::max<std::size_t>(best_round, 1);
        e.trees.resize(best_round);
        result.report.best_round = best_round;
        return result;
    }

private:
    double split_gain(double gl, double hl, double g, double h) const {
        const double gr = g - gl;
        const double hr = h - hl;
        return 0.5 * (gl * gl / (hl + cfg_.lambda) + gr * gr / (hr + cfg_.lambda) - g * g / (h + cfg_.lambda)) -
               cfg_.gamma;
    }

    Tree grow(const std::vector<double>& pred, std::vector<std::int32_t>& leaf_of) {
        std::vector<double> grad(n_);
        for (std::size_t i = 0; i < n_; ++i) grad[i] = pred[i] - z_[i];

        std::vector<BuildNode> nodes(1);
        for (std::size_t i = 0; i < n_; ++i) nodes[0].g += grad[i];
        nodes[0].h = static_cast<double>(n_);
        std::vector<std::int32_t> node_of(n_, 0);
        std::vector<std::int32_t> level{0};

        for (std::size_t depth = 0; depth < cfg_.max_depth && !level.empty(); ++depth) {
            // slot[node] = index into this level's arrays, -1 when not splittable.
            std::vector<std::int32_t> slot(nodes.size(), -1);
            for (std::size_t s = 0; s < level.size(); ++s) slot[static_cast<std::size_t>(level[s])] = static_cast<std::int32_t>(s);
            std::vector<Candidate> best(level.size());
            std::vector<double> gl(level.size());
            std::vector<double> hl(level.size());
            std::vector<std::uint32_t> last(level.size());

            for (std::size_t f = 0; f < p_; ++f) {
                if (cuts_[f].empty()) continue;
                std::fill(gl.begin(), gl.end(), 0.0);
                std::fill(hl.begin(), hl.end(), 0.0);
                std::fill(last.begin(), last.end(), kNoBin);
                const auto& bins = bins_[f];
                for (std::uint32_t pos : order_[f]) {
                    const std::int32_t node = node_of[pos];
                    if (node < 0) continue;
                    const std::int32_t s = slot[static_cast<std::size_t>(node)];
                    if (s < 0) continue;
                    const auto si = static_cast<std::size_t>(s);
                    const std::uint32_t b = bins[pos];
                    if (last[si] != b) {
                        if (last[si] != kNoBin) consider(nodes[static_cast<std::size_t>(node)], gl[si], hl[si], f, last[si], best[si]);
                        last[si] = b;
                    }
                    gl[si] += grad[pos];
                    hl[si] += 1.0;
                }
            }

            std::vector<std::int32_t> next;
            for (std::size_t s = 0; s < level.size(); ++s) {
                const auto id = static_cast<std::size_t>(level[s]);
                if (best[s].feature < 0) continue;
                const auto f = static_cast<std::size_t>(best[s].feature);
                const auto left = static_cast<std::int32_t>(nodes.size());
                nodes[id].feature = best[s].feature;
                nodes[id].split_bin = best[s].bin;
                nodes[id].threshold = cuts_[f][best[s].bin];
                nodes[id].gain = best[s].gain;
                nodes[id].left = left;
                nodes[id].right = left + 1;
                BuildNode child;
                child.depth = depth + 1;
                nodes.push_back(child);
                nodes.push_back(child);
                next.push_back(left);
                next.push_back(left + 1);
            }
            if (next.empty()) break;
            for (std::size_t i = 0; i < n_; ++i) {
                const std::int32_t node = node_of[i];
                if (node < 0) continue;
                const BuildNode& parent = nodes[static_cast<std::size_t>(node)];
                if (parent.feature < 0 || parent.depth != depth) continue;
                const bool go_left = bins_[static_cast<std::size_t>(parent.feature)][i] <= parent.split_bin;
                const std::int32_t child = go_left ? parent.left : parent.right;
                node_of[i] = child;
                nodes[static_cast<std::size_t>(child)].g += grad[i];
                nodes[static_cast<std::size_t>(child)].h += 1.0;
            }
            level = std::move(next);
            if (depth + 1 < cfg_.max_depth) {
                std::erase_if(level, [&](std::int32_t id) {
                    return nodes[static_cast<std::size_t>(id)].h < 2.0 * std::max(cfg_.min_child_weight, 1.0);
                });
            }
        }
        return finalize(nodes, node_of, leaf_of);
    }

    void consider(const BuildNode& node, double gl, double hl, std::size_t f, std::uint32_t bin, Candidate& best) const {
        const double hr = node.h - hl;
        if (hl < cfg_.min_child_weight || hr < cfg_.min_child_weight) return;
        const double gain = split_gain(gl, hl, node.g, node.h);
        if (gain > best.gain) best = {gain, static_cast<int>(f), bin};
    }

    Tree finalize(const std::vector<BuildNode>& nodes, const std::vector<std::int32_t>& node_of,
                  std::vector<std::int32_t>& leaf_of) const {
        Tree tree;
        std::vector<std::int32_t> remap(nodes.size(), -1);
        // Iterative preorder.
        std::vector<std::size_t> stack{0};
        while (!stack.empty()) {
            const std::size_t id = stack.back();
            stack.pop_back();
            remap[id] = static_cast<std::int32_t>(tree.nodes.size());
            const BuildNode& b = nodes[id];
            TreeNode n;
            n.cover = b.h;
            if (b.feature >= 0) {
                n.feature = b.feature;
                n.threshold = b.threshold;
                n.gain = b.gain;
                stack.push_back(static_cast<std::size_t>(b.right));
                stack.push_back(static_cast<std::size_t>(b.left));
            } else {
                n.weight = -b.g / (b.h + cfg_.lambda);
            }
            tree.nodes.push_back(n);
        }
        for (std::size_t id = 0; id < nodes.size(); ++id) {
            const BuildNode& b = nodes[id];
            if (b.feature < 0) continue;
            auto& n = tree.nodes[static_cast<std::size_t>(remap[id])];
            n.left = remap[static_cast<std::size_t>(b.left)];
            n.right = remap[static_cast<std::size_t>(b.right)];
        }
        for (std::size_t i = 0; i < n_; ++i) leaf_of[i] = remap[static_cast<std::size_t>(node_of[i])];
        return tree;
    }

    const Dataset& ds_;
    const Split& split_;
    const TrainConfig& cfg_;
    std::size_t n_ = 0;
    std::size_t p_ = 0;
    std::vector<double> z_;
    std::vector<std::vector<double>> cuts_;
    std::vector<std::vector<std::uint32_t>> bins_;
    std::vector<std::vector<std::uint32_t>> order_;
};

}  // namespace

TrainResult train(const Dataset& ds, const Split& split, const TrainConfig& cfg) {
    cfg.validate();
    if (split.train.empty()) throw ValidationError("training split is empty");
    if (ds.target.size() != ds.rows() || ds.x.size() != ds.rows() * ds.cols()) {
        throw ValidationError("dataset shape is inconsistent");
    }
    for (const auto* part : {&split.train, &split.test, &split.validation}) {
        for (std::size_t r : *part) {
            if (r >= ds.rows()) throw ValidationError("split row index out of range");
            if (!std::isfinite(ds.target[r]) || ds.target[r] < 0.0) {
                throw DataError("target of tile " + std::to_string(ds.tile_ids[r].value) +
                                " is negative or not finite");
            }
        }
    }
    Booster booster(ds, split, cfg);
    TrainResult result = booster.run();
    auto eval = [&](const std::vector<std::size_t>& rows) {
        if (rows.empty()) return 0.0;
        std::vector<double> truth;
        truth.reserve(rows.size());
        for (std::size_t r : rows) truth.push_back(ds.target[r]);
        return rmsle(predict_rows(result.ensemble, ds, rows), truth);
    };
    result.report.rmsle_train = eval(split.train);
    result.report.rmsle_test = eval(split.test);
    result.report.rmsle_validation = eval(split.validation);
    return result;
}

std::vector<FeatureGain> gain_importance(const Ensemble& e) {
    std::vector<double> total(e.n_features(), 0.0);
    std::vector<bool> used(e.n_features(), false);
    for (const Tree& t : e.trees) {
        for (const TreeNode& n : t.nodes) {
            if (n.is_leaf()) continue;
            total[static_cast<std::size_t>(n.feature)] += n.gain;
            used[static_cast<std::size_t>(n.feature)] = true;
        }
    }
    std::vector<FeatureGain> out;
    for (std::size_t f = 0; f < total.size(); ++f) {
        if (used[f]) out.push_back({f, e.feature_names[f], total[f], 0.0});
    }
    std::stable_sort(out.begin(), out.end(), [](const FeatureGain& a, const FeatureGain& b) { return a.gain > b.gain; });
    double sum = 0.0;
    for (const auto& g : out) sum += g.gain;
    double acc = 0.0;
    for (auto& g : out) {
        acc += g.gain;
        g.cumulative_share = sum > 0.0 ? acc / sum : 0.0;
    }
    if (!out.empty() && sum > 0.0) out.back().cumulative_share = 1.0;
    return out;
}

json ensemble_to_json(const Ensemble& e) {
    json trees = json::array();
    for (const Tree& t : e.trees) {
        json nodes = json::array();
        for (const TreeNode& n : t.nodes) {
            if (n.is_leaf()) {
                nodes.push_back({{"leaf", n.weight}, {"cover", n.cover}});
            } else {
                nodes.push_back({{"split", n.feature},
                                 {"threshold", n.threshold},
                                 {"default_left", n.default_left},
                                 {"gain", n.gain},
                                 {"cover", n.cover},
                                 {"left", n.left},
                                 {"right", n.right}});
            }
        }
        trees.push_back({{"nodes", std::move(nodes)}});
    }
    return {{"format", "tilepop-ensemble"},
            {"version", 1},
            {"base_score", e.base_score},
            {"learning_rate", e.learning_rate},
            {"feature_names", e.feature_names},
            {"trees", std::move(trees)}};
}

Ensemble ensemble_from_json(const json& j) {
    Ensemble e;
    try {
        if (j.at("format").get<std::string>() != "tilepop-ensemble") throw DataError("not an ensemble dump");
        if (j.at("version").get<int>() != 1) throw DataError("unsupported ensemble dump version");
        e.base_score = j.at("base_score").get<double>();
        e.learning_rate = j.at("learning_rate").get<double>();
        e.feature_names = j.at("feature_names").get<std::vector<std::string>>();
        for (const json& jt : j.at("trees")) {
            Tree t;
            for (const json& jn : jt.at("nodes")) {
                TreeNode n;
                if (!jn.contains("cover")) throw DataError("ensemble dump lacks cover counts");
                n.cover = jn.at("cover").get<double>();
                if (jn.contains("leaf")) {
                    n.weight = jn.at("leaf").get<double>();
                } else {
                    n.feature = jn.at("split").get<int>();
                    n.threshold = jn.at("threshold").get<double>();
                    n.default_left = jn.value("default_left", true);
                    n.gain = jn.at("gain").get<double>();
                    n.left = jn.at("left").get<std::int32_t>();
                    n.right = jn.at("right").get<std::int32_t>();
                    if (n.feature < 0) throw DataError("negative split feature");
                }
                t.nodes.push_back(n);
            }
            t.validate(e.feature_names.size());
            e.trees.push_back(std::move(t));
        }
    } catch (const json::exception& ex) {
        throw DataError(std::string("invalid ensemble dump: ") + ex.what());
    } catch (const ValidationError& ex) {
        throw DataError(std::string("invalid ensemble dump: ") + ex.what());
    }
    return e;
}

}  // namespace tilepop

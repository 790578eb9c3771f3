#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "tilepop/features.hpp"

namespace tilepop {

/// One node of a regression tree. Internal nodes have feature >= 0; leaves have feature == -1.
/// Rows go left when x[feature] < threshold (NaN follows default_left).
struct TreeNode {
    int feature = -1;
    double threshold = 0.0;
    std::int32_t left = -1;
    std::int32_t right = -1;
    bool default_left = true;
    double gain = 0.0;    // split gain (internal nodes)
    double weight = 0.0;  // raw leaf weight, before the learning rate
    double cover = 0.0;   // training rows reaching the node

    bool is_leaf() const noexcept { return feature < 0; }
};

/// Nodes in preorder; node 0 is the root.
struct Tree {
    std::vector<TreeNode> nodes;

    double predict(std::span<const double> row) const;
    std::size_t depth() const;
    /// Throws ValidationError when child links or thresholds are malformed.
    void validate(std::size_t n_features) const;
};

struct Ensemble {
    double base_score = 0.0;
    double learning_rate = 0.1;
    std::vector<std::string> feature_names;
    std::vector<Tree> trees;

    std::size_t n_features() const noexcept { return feature_names.size(); }
    /// base_score + eta * sum of tree outputs (z-space).
    double predict_z(std::span<const double> row) const;
};

enum class SplitMode { Exact, Histogram };

struct TrainConfig {
    std::size_t max_depth = 6;
    std::size_t n_rounds = 400;
    double learning_rate = 0.1;
    double lambda = 1.0;
    double gamma = 0.0;
    double min_child_weight = 1.0;
    SplitMode mode = SplitMode::Histogram;
    std::size_t n_bins = 256;
    std::size_t early_stopping_rounds = 30;  // 0 disables
    std::uint64_t seed = 0;

    void validate() const;
};

nlohmann::json train_config_to_json(const TrainConfig& cfg);
TrainConfig train_config_from_json(const nlohmann::json& j);

struct RoundStats {
    double train_loss = 0.0;  // 0.5 * sum (pred - z)^2 over training rows
    double train_rmsle = 0.0;
    double test_rmsle = 0.0;
};

struct EvalReport {
    double rmsle_train = 0.0;
    double rmsle_test = 0.0;
    double rmsle_validation = 0.0;
    std::size_t best_round = 0;  // number of trees kept
    std::vector<RoundStats> curve;
};

nlohmann::json eval_report_to_json(const EvalReport& r);

struct TrainResult {
    Ensemble ensemble;
    EvalReport report;
};

/// Boosts squared error on z = ln(1 + target). Errors: empty training split, non-finite or
/// negative target.
TrainResult train(const Dataset& ds, const Split& split, const TrainConfig& cfg);

/// max(0, exp(predict_z(row)) - 1). Throws ValidationError on a feature-count mismatch.
double predict(const Ensemble& e, std::span<const double> row);
std::vector<double> predict_rows(const Ensemble& e, const Dataset& ds, std::span<const std::size_t> rows);

/// sqrt(mean((ln(1+pred) - ln(1+truth))^2)).
double rmsle(std::span<const double> pred, std::span<const double> truth);

struct FeatureGain {
    std::size_t feature = 0;
    std::string name;
    double gain = 0.0;
    double cumulative_share = 0.0;
};

/// Per-feature gain summed over every split, sorted by gain (descending, ties by feature
/// index). Features that are never split on are omitted.
std::vector<FeatureGain> gain_importance(const Ensemble& e);

nlohmann::json ensemble_to_json(const Ensemble& e);
Ensemble ensemble_from_json(const nlohmann::json& j);

/// Per-feature bin boundaries used during training, exposed for tests.
/// bin(v) = number of cuts <= v.
std::vector<double> feature_cuts(std::vector<double> values, SplitMode mode, std::size_t n_bins);

}  // namespace tilepop

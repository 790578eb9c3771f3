#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "tilepop/features.hpp"
#include "tilepop/gbtree.hpp"

namespace tilepop {

/// Path-dependent SHAP attributions in z-space (before the inverse log transform).
struct ShapMatrix {
    double base_value = 0.0;
    std::vector<TileId> tile_ids;
    std::vector<std::string> feature_names;
    std::vector<double> phi;  // row-major, rows x features

    std::size_t rows() const noexcept { return tile_ids.size(); }
    std::size_t cols() const noexcept { return feature_names.size(); }
    double at(std::size_t r, std::size_t c) const { return phi[r * cols() + c]; }
    std::span<const double> row(std::size_t r) const { return {phi.data() + r * cols(), cols()}; }
};

/// Cover-weighted mean leaf value of one tree (raw weights).
double tree_expected_value(const Tree& tree);

/// Adds the SHAP values of one tree (raw leaf weights, no learning rate) for `row` into phi.
void tree_shap_single(const Tree& tree, std::span<const double> row, std::span<double> phi);

/// Attributions of the whole ensemble for the given dataset rows, scaled by the learning
/// rate; base_value = base_score + eta * sum of tree expected values. Throws
/// ValidationError when the ensemble has no usable cover counts.
ShapMatrix tree_shap(const Ensemble& e, const Dataset& ds, std::span<const std::size_t> rows);

/// Classic Shapley values of one tree by enumeration of all subsets of the features it
/// uses, with the cover-weighted conditional expectation as value function.
/// Throws ValidationError when the tree uses more than 12 distinct features.
std::vector<double> brute_force_shap(const Tree& tree, std::span<const double> row, std::size_t n_features);

/// Largest |base + sum(phi) - predict_z| over the rows of a ShapMatrix.
double local_accuracy_error(const ShapMatrix& sm, const Ensemble& e, const Dataset& ds,
                            std::span<const std::size_t> rows);

struct DependencePoint {
    TileId tile;
    double feature_value = 0.0;
    double phi = 0.0;
};

/// (feature value, phi) per explained row, sorted by feature value (ties by tile id).
using DependenceSeries = std::vector<DependencePoint>;

/// Looks the feature up by column name in both the SHAP matrix and the dataset.
DependenceSeries dependence_series(const ShapMatrix& sm, const Dataset& ds, std::string_view feature);
DependenceSeries dependence_series(const ShapMatrix& sm, const FeatureMatrix& fm, const FeatureKey& key);

/// "tile_id,base,phi_<col>..."
std::string write_shap_csv(const ShapMatrix& sm);
/// "tile_id,feature_value,phi"
std::string write_dependence_csv(const DependenceSeries& series);

}  // namespace tilepop

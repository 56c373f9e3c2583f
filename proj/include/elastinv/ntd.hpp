#pragma once

#include <cstdint>
#include <vector>

#include <Eigen/Core>

#include "elastinv/fem.hpp"
#include "elastinv/mesh.hpp"

namespace elastinv {

/// Discrete Neumann-to-Dirichlet map on Gamma_N.
///
/// Column j of `matrix` is the Gamma_N trace produced by the load whose nodal
/// coefficients are column j of `basis`. For the full hat-function basis
/// (basis = I) the matrix acts on nodal coefficient vectors and
/// `boundary_mass * matrix` is symmetric: <g, Lambda h>_M = g^T M Lambda h.
struct NtDOperator {
    Eigen::MatrixXd matrix;
    Eigen::MatrixXd basis;
    SparseMatrix boundary_mass;

    bool full_basis() const { return basis.rows() == basis.cols() && basis.isIdentity(0.0); }
    /// M * matrix, symmetrized. Requires the full basis.
    Eigen::MatrixXd weighted() const;
    /// ||M Lambda - (M Lambda)^T||_max / ||M Lambda||_max.
    double self_adjointness_defect() const;
    /// <g, Lambda g>_M for nodal coefficients g.
    double form(const Eigen::VectorXd& g) const;
};

/// All nodal hat-function loads on Gamma_N.
NtDOperator build_ntd(const Mesh& mesh, const LameField& field, SolverOptions options = {});
/// Low-dimensional probe set.
NtDOperator build_ntd(const Mesh& mesh, const LameField& field, const std::vector<SurfaceLoad>& basis,
                      SolverOptions options = {});

enum class PairOrder { Leq, Geq };

/// Two fields on one mesh with pointwise lambda_1 <= lambda_2 and mu_1 <= mu_2 (Leq) or the reverse.
struct OrderedPair {
    LameField first;
    LameField second;
    PairOrder order = PairOrder::Leq;

    /// Detects the order; throws PreconditionError if the fields are not pointwise comparable.
    static OrderedPair make(LameField first, LameField second);
    OrderedPair swapped() const;
};

struct SandwichValues {
    double lhs = 0.0;  // int (C1 - C2) e(u2) : e(u2)
    double mid = 0.0;  // <g, Lambda(C2) g> - <g, Lambda(C1) g>
    double rhs = 0.0;  // int (C1 - C2) e(u1) : e(u1)

    /// lhs >= mid >= rhs up to `relative_slack` times the largest magnitude involved.
    bool holds(double relative_slack) const;
};

/// Two-sided energy estimate for one load. Works for any two fields on the mesh.
SandwichValues monotonicity_sandwich(const Mesh& mesh, const LameField& first, const LameField& second,
                                     const SurfaceLoad& load, SolverOptions options = {});
SandwichValues monotonicity_sandwich(const Mesh& mesh, const OrderedPair& pair, const SurfaceLoad& load,
                                     SolverOptions options = {});

/// Eigenvalues (ascending) of Lambda_1 - Lambda_2 as an operator on L2(Gamma_N):
/// the generalized problem M(Lambda_1 - Lambda_2) x = theta M x.
Eigen::VectorXd difference_spectrum(const NtDOperator& first, const NtDOperator& second);

/// Smallest eigenvalue of Lambda_1 - Lambda_2; requires a Leq pair
/// (throws PreconditionError otherwise). Monotonicity predicts >= 0.
double loewner_gap(const Mesh& mesh, const OrderedPair& pair, SolverOptions options = {});

/// ||Lambda_1 - Lambda_2|| in L(L2(Gamma_N)): largest |eigenvalue| of the difference.
double operator_distance(const NtDOperator& first, const NtDOperator& second);
double operator_distance(const Mesh& mesh, const LameField& first, const LameField& second,
                         SolverOptions options = {});

/// max(||lambda_1 - lambda_2||_inf, ||mu_1 - mu_2||_inf).
double parameter_distance(const LameField& first, const LameField& second);

struct StabilityEntry {
    int pair_index = 0;
    double parameter_distance = 0.0;
    double operator_distance = 0.0;
    double ratio = 0.0;
};

struct StabilityReport {
    std::vector<StabilityEntry> entries;
    std::vector<int> skipped;             // pairs with d = 0
    std::vector<int> uniqueness_failures; // d >= threshold but operator distance == 0
    double max_ratio = 0.0;
    double min_ratio = 0.0;
    std::vector<double> histogram_edges;  // bins + 1 edges between min and max ratio
    std::vector<int> histogram_counts;

    bool all_ratios_finite() const;
};

/// Ratio d / ||Lambda_1 - Lambda_2|| over a family; the maximum is the empirical
/// Lipschitz constant at this discretization.
StabilityReport stability_ratio_experiment(const Mesh& mesh, const std::vector<OrderedPair>& family,
                                           SolverOptions options = {}, int histogram_bins = 10,
                                           double uniqueness_threshold = 1e-6);

/// Quadrant index 0..3 of an element centroid (counter-clockwise from x > 0, y >= 0).
int disk_quadrant(const Eigen::Vector2d& point);

/// Piecewise constant on the four disk quadrants, values uniform in `box`,
/// ordered by taking min/max envelopes of two independent draws.
std::vector<OrderedPair> quadrant_family(const Mesh& mesh, int count, std::uint64_t seed, const LameBounds& box);

/// Per-element random pairs: a base field uniform in `box` plus a non-negative
/// increment on a random subset of elements (kept inside the box).
std::vector<OrderedPair> random_ordered_pairs(const Mesh& mesh, int count, std::uint64_t seed,
                                              const LameBounds& box);

} // namespace elastinv

#include "elastinv/ntd.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

#include <Eigen/Eigenvalues>

#include "elastinv/errors.hpp"

namespace elastinv {
namespace {

void require_same_mesh(const LameField& a, const LameField& b) {
    if (a.size() != b.size()) throw ParameterError("fields are defined on different meshes");
}

void require_full(const NtDOperator& op) {
    if (!op.full_basis()) throw PreconditionError("operation requires the full nodal basis");
}

} // namespace

Eigen::MatrixXd NtDOperator::weighted() const {
    require_full(*this);
    const Eigen::MatrixXd W = boundary_mass * matrix;
    return 0.5 * (W + W.transpose());
}

double NtDOperator::self_adjointness_defect() const {
    require_full(*this);
    const Eigen::MatrixXd W = boundary_mass * matrix;
    const double scale = W.cwiseAbs().maxCoeff();
    return scale == 0.0 ? 0.0 : (W - W.transpose()).cwiseAbs().maxCoeff() / scale;
}

double NtDOperator::form(const Eigen::VectorXd& g) const {
    require_full(*this);
    return g.dot(boundary_mass * (matrix * g));
}

NtDOperator build_ntd(const Mesh& mesh, const LameField& field, SolverOptions options) {
    const int n = 2 * mesh.num_neumann_nodes();
    const ElasticSolver solver(mesh, field, options);
    NtDOperator op;
    op.basis = Eigen::MatrixXd::Identity(n, n);
    op.boundary_mass = boundary_mass_matrix(mesh);
    op.matrix.resize(n, n);
    for (int j = 0; j < n; ++j) op.matrix.col(j) = solver.solve_neumann_nodal(op.basis.col(j)).trace_on_neumann;
    return op;
}

NtDOperator build_ntd(const Mesh& mesh, const LameField& field, const std::vector<SurfaceLoad>& basis,
                      SolverOptions options) {
    const int n = 2 * mesh.num_neumann_nodes();
    const ElasticSolver solver(mesh, field, options);
    NtDOperator op;
    op.boundary_mass = boundary_mass_matrix(mesh);
    op.basis.resize(n, static_cast<Eigen::Index>(basis.size()));
    op.matrix.resize(n, static_cast<Eigen::Index>(basis.size()));
    for (std::size_t j = 0; j < basis.size(); ++j) {
        op.basis.col(j) = basis[j].nodal_values(mesh);
        op.matrix.col(j) = solver.solve_neumann_nodal(op.basis.col(j)).trace_on_neumann;
    }
    return op;
}

OrderedPair OrderedPair::make(LameField first, LameField second) {
    require_same_mesh(first, second);
    PairOrder order;
    if (first.dominated_by(second))
        order = PairOrder::Leq;
    else if (second.dominated_by(first))
        order = PairOrder::Geq;
    else
        throw PreconditionError("fields are not pointwise ordered");
    return OrderedPair{std::move(first), std::move(second), order};
}

OrderedPair OrderedPair::swapped() const {
    return OrderedPair{second, first, order == PairOrder::Leq ? PairOrder::Geq : PairOrder::Leq};
}

bool SandwichValues::holds(double relative_slack) const {
    const double scale = std::max({std::abs(lhs), std::abs(mid), std::abs(rhs)});
    const double slack = relative_slack * scale;
    return lhs >= mid - slack && mid >= rhs - slack;
}

SandwichValues monotonicity_sandwich(const Mesh& mesh, const LameField& first, const LameField& second,
                                     const SurfaceLoad& load, SolverOptions options) {
    require_same_mesh(first, second);
    const Eigen::VectorXd g = load.nodal_values(mesh);
    const SparseMatrix M = boundary_mass_matrix(mesh);
    const ForwardSolution u1 = ElasticSolver(mesh, first, options).solve_neumann_nodal(g);
    const ForwardSolution u2 = ElasticSolver(mesh, second, options).solve_neumann_nodal(g);
    const Eigen::VectorXd d_lambda = first.lambda() - second.lambda();
    const Eigen::VectorXd d_mu = first.mu() - second.mu();
    const Eigen::VectorXd Mg = M * g;
    return SandwichValues{contrast_energy(mesh, d_lambda, d_mu, u2.strain),
                          Mg.dot(u2.trace_on_neumann) - Mg.dot(u1.trace_on_neumann),
                          contrast_energy(mesh, d_lambda, d_mu, u1.strain)};
}

SandwichValues monotonicity_sandwich(const Mesh& mesh, const OrderedPair& pair, const SurfaceLoad& load,
                                     SolverOptions options) {
    return monotonicity_sandwich(mesh, pair.first, pair.second, load, options);
}

Eigen::VectorXd difference_spectrum(const NtDOperator& first, const NtDOperator& second) {
    require_full(first);
    require_full(second);
    if (first.matrix.rows() != second.matrix.rows()) throw ParameterError("operators act on different spaces");
    const Eigen::MatrixXd A = first.weighted() - second.weighted();
    const Eigen::MatrixXd B = Eigen::MatrixXd(first.boundary_mass);
    Eigen::GeneralizedSelfAdjointEigenSolver<Eigen::MatrixXd> es(A, B, Eigen::EigenvaluesOnly);
    if (es.info() != Eigen::Success) throw NumericError("generalized eigensolve failed");
    return es.eigenvalues();
}

double loewner_gap(const Mesh& mesh, const OrderedPair& pair, SolverOptions options) {
    if (pair.order != PairOrder::Leq || !pair.first.dominated_by(pair.second))
        throw PreconditionError("loewner_gap needs lambda_1 <= lambda_2 and mu_1 <= mu_2");
    const auto spectrum =
        difference_spectrum(build_ntd(mesh, pair.first, options), build_ntd(mesh, pair.second, options));
    return spectrum.minCoeff();
}

double operator_distance(const NtDOperator& first, const NtDOperator& second) {
    const auto spectrum = difference_spectrum(first, second);
    return std::max(std::abs(spectrum.minCoeff()), std::abs(spectrum.maxCoeff()));
}

double operator_distance(const Mesh& mesh, const LameField& first, const LameField& second, SolverOptions options) {
    require_same_mesh(first, second);
    return operator_distance(build_ntd(mesh, first, options), build_ntd(mesh, second, options));
}

double parameter_distance(const LameField& first, const LameField& second) {
    require_same_mesh(first, second);
    if (first.size() == 0) return 0.0;
    return std::max((first.lambda() - second.lambda()).cwiseAbs().maxCoeff(),
                    (first.mu() - second.mu()).cwiseAbs().maxCoeff());
}

bool StabilityReport::all_ratios_finite() const {
    return std::all_of(entries.begin(), entries.end(), [](const StabilityEntry& e) { return std::isfinite(e.ratio); });
}

StabilityReport stability_ratio_experiment(const Mesh& mesh, const std::vector<OrderedPair>& family,
                                           SolverOptions options, int histogram_bins, double uniqueness_threshold) {
    StabilityReport report;
    for (int i = 0; i < static_cast<int>(family.size()); ++i) {
        const auto& pair = family[i];
        const bool ordered = pair.order == PairOrder::Leq ? pair.first.dominated_by(pair.second)
                                                          : pair.second.dominated_by(pair.first);
        if (!ordered) throw PreconditionError("stability family contains an unordered pair");
        const double d = parameter_distance(pair.first, pair.second);
        if (d == 0.0) {
            report.skipped.push_back(i);
            continue;
        }
        const double op = operator_distance(mesh, pair.first, pair.second, options);
        if (d >= uniqueness_threshold && !(op > 0.0)) report.uniqueness_failures.push_back(i);
        const double ratio = op > 0.0 ? d / op : std::numeric_limits<double>::infinity();
        report.entries.push_back({i, d, op, ratio});
    }
    if (report.entries.empty()) return report;

    report.max_ratio = -std::numeric_limits<double>::infinity();
    report.min_ratio = std::numeric_limits<double>::infinity();
    for (const auto& e : report.entries) {
        report.max_ratio = std::max(report.max_ratio, e.ratio);
        report.min_ratio = std::min(report.min_ratio, e.ratio);
    }
    if (!report.all_ratios_finite() || histogram_bins <= 0) return report;
    const double width = (report.max_ratio - report.min_ratio) / histogram_bins;
    for (int b = 0; b <= histogram_bins; ++b) report.histogram_edges.push_back(report.min_ratio + b * width);
    report.histogram_counts.assign(histogram_bins, 0);
    for (const auto& e : report.entries) {
        int b = width > 0.0 ? static_cast<int>((e.ratio - report.min_ratio) / width) : 0;
        ++report.histogram_counts[std::clamp(b, 0, histogram_bins - 1)];
    }
    return report;
}

int disk_quadrant(const Eigen::Vector2d& point) {
    double angle = std::atan2(point.y(), point.x());
    if (angle < 0.0) angle += 2.0 * std::numbers::pi;
    return std::clamp(static_cast<int>(angle / (0.5 * std::numbers::pi)), 0, 3);
}

std::vector<OrderedPair> quadrant_family(const Mesh& mesh, int count, std::uint64_t seed, const LameBounds& box) {
    box.validate();
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> lam(box.lambda_min, box.lambda_max), mu(box.mu_min, box.mu_max);
    std::vector<int> quadrant(mesh.num_elements());
    for (int e = 0; e < mesh.num_elements(); ++e) quadrant[e] = disk_quadrant(mesh.centroid(e));

    std::vector<OrderedPair> family;
    for (int p = 0; p < count; ++p) {
        std::array<double, 4> l1, l2, m1, m2;
        for (int q = 0; q < 4; ++q) l1[q] = lam(rng), m1[q] = mu(rng);
        for (int q = 0; q < 4; ++q) l2[q] = lam(rng), m2[q] = mu(rng);
        Eigen::VectorXd lo_l(mesh.num_elements()), hi_l(mesh.num_elements());
        Eigen::VectorXd lo_m(mesh.num_elements()), hi_m(mesh.num_elements());
        for (int e = 0; e < mesh.num_elements(); ++e) {
            const int q = quadrant[e];
            lo_l[e] = std::min(l1[q], l2[q]);
            hi_l[e] = std::max(l1[q], l2[q]);
            lo_m[e] = std::min(m1[q], m2[q]);
            hi_m[e] = std::max(m1[q], m2[q]);
        }
        family.push_back(OrderedPair::make(LameField(lo_l, lo_m, box), LameField(hi_l, hi_m, box)));
    }
    return family;
}

std::vector<OrderedPair> random_ordered_pairs(const Mesh& mesh, int count, std::uint64_t seed,
                                              const LameBounds& box) {
    box.validate();
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    const int n = mesh.num_elements();
    std::vector<OrderedPair> pairs;
    for (int p = 0; p < count; ++p) {
        Eigen::VectorXd l1(n), m1(n), l2(n), m2(n);
        for (int e = 0; e < n; ++e) {
            l1[e] = box.lambda_min + (box.lambda_max - box.lambda_min) * unit(rng);
            m1[e] = box.mu_min + (box.mu_max - box.mu_min) * unit(rng);
            const bool bump = unit(rng) < 0.5;
            const double tl = unit(rng), tm = unit(rng);
            l2[e] = bump ? l1[e] + (box.lambda_max - l1[e]) * tl : l1[e];
            m2[e] = bump ? m1[e] + (box.mu_max - m1[e]) * tm : m1[e];
        }
        pairs.push_back(OrderedPair::make(LameField(l1, m1, box), LameField(l2, m2, box)));
    }
    return pairs;
}

} // namespace elastinv

#pragma once

#include <functional>
#include <memory>
#include <utility>
#include <variant>
#include <vector>

#include <Eigen/Core>
#include <Eigen/SparseCore>

#include "elastinv/mesh.hpp"

namespace elastinv {

using SparseMatrix = Eigen::SparseMatrix<double>;

/// Admissible box a <= lambda <= b, c <= mu <= d.
struct LameBounds {
    double lambda_min = 1e-8;
    double lambda_max = 1e8;
    double mu_min = 1e-8;
    double mu_max = 1e8;

    void validate() const;
    bool contains(double lambda, double mu) const {
        return lambda >= lambda_min && lambda <= lambda_max && mu >= mu_min && mu <= mu_max;
    }
};

/// Piecewise-constant Lame parameters, one (lambda, mu) per triangle.
class LameField {
public:
    LameField() = default;
    /// Throws ParameterError if sizes differ or any value leaves `bounds`.
    LameField(Eigen::VectorXd lambda, Eigen::VectorXd mu, LameBounds bounds = {});

    static LameField constant(const Mesh& mesh, double lambda, double mu, LameBounds bounds = {});
    /// Samples `fn(centroid) -> (lambda, mu)` on every element.
    static LameField sampled(const Mesh& mesh, const std::function<std::pair<double, double>(const Eigen::Vector2d&)>& fn,
                             LameBounds bounds = {});

    const Eigen::VectorXd& lambda() const { return lambda_; }
    const Eigen::VectorXd& mu() const { return mu_; }
    const LameBounds& bounds() const { return bounds_; }
    int size() const { return static_cast<int>(lambda_.size()); }

    LameField scaled(double factor) const;
    LameField with_bounds(LameBounds bounds) const { return LameField(lambda_, mu_, bounds); }

    /// Pointwise lambda <= other.lambda and mu <= other.mu.
    bool dominated_by(const LameField& other) const;

private:
    Eigen::VectorXd lambda_;
    Eigen::VectorXd mu_;
    LameBounds bounds_;
};

/// Surface traction on Gamma_N, either constant or piecewise linear with one
/// 2D value per Gamma_N node (interleaved x, y in Mesh::neumann_nodes() order).
class SurfaceLoad {
public:
    static SurfaceLoad constant(const Eigen::Vector2d& g);
    static SurfaceLoad nodal(Eigen::VectorXd values);

    bool is_constant() const { return std::holds_alternative<Eigen::Vector2d>(data_); }
    const Eigen::Vector2d& constant_vector() const { return std::get<Eigen::Vector2d>(data_); }

    /// Nodal coefficients on `mesh`'s Gamma_N nodes. Throws ParameterError on size mismatch or
    /// non-finite entries.
    Eigen::VectorXd nodal_values(const Mesh& mesh) const;

private:
    explicit SurfaceLoad(std::variant<Eigen::Vector2d, Eigen::VectorXd> data) : data_(std::move(data)) {}
    std::variant<Eigen::Vector2d, Eigen::VectorXd> data_;
};

/// g1..g4 = (0.1, 0.1), (0.1, 0.2), (0.2, 0.1), (0.3, 0.5), constant on Gamma_N.
std::vector<SurfaceLoad> standard_loads();

/// lambda * tr(strain) * I + 2 * mu * strain.
Eigen::Matrix2d isotropic_stress(double lambda, double mu, const Eigen::Matrix2d& strain);

/// Contraction C(lambda, mu) strain : strain.
inline double isotropic_energy_density(double lambda, double mu, const Eigen::Matrix2d& strain) {
    const double tr = strain.trace();
    return lambda * tr * tr + 2.0 * mu * strain.cwiseProduct(strain).sum();
}

/// Node <-> unknown map. Dirichlet nodes have no unknowns; node n owns
/// unknowns 2k, 2k+1 where k = node_to_free[n].
struct DofMap {
    std::vector<int> node_to_free;
    std::vector<int> free_to_node;

    explicit DofMap(const Mesh& mesh);
    DofMap() = default;
    int num_dofs() const { return 2 * static_cast<int>(free_to_node.size()); }
};

struct AssembledSystem {
    SparseMatrix stiffness;  // on free unknowns, Dirichlet rows/columns eliminated
    Eigen::VectorXd load;
    DofMap dof_map;
};

/// Constant-strain P1 vector elements, exact integration. Stiffness entries are
/// computed once for the upper triangle and mirrored, so K == K^T exactly.
AssembledSystem assemble(const Mesh& mesh, const LameField& field, const SurfaceLoad& load);

/// P1 mass matrix of the Gamma_N edges for vector data, size 2n x 2n with
/// n = mesh.num_neumann_nodes(). Realizes the L2(Gamma_N) inner product.
SparseMatrix boundary_mass_matrix(const Mesh& mesh);

struct ForwardSolution {
    Eigen::VectorXd displacement;      // 2 per mesh node, zero on Dirichlet nodes
    Eigen::VectorXd trace_on_neumann;  // 2 per Gamma_N node
    std::vector<Eigen::Matrix2d> strain;
    Eigen::VectorXd divergence;        // == strain trace, per element
    double relative_residual = 0.0;
};

enum class LinearSolverKind { Cholesky, ConjugateGradient };

struct SolverOptions {
    LinearSolverKind kind = LinearSolverKind::Cholesky;
    /// Relative residual ||K u - b|| / ||b|| every solve must reach.
    double tolerance = 1e-12;
    int max_cg_iterations = 20000;
};

/// Factorized forward operators for one (mesh, field): the Neumann problem on
/// all free unknowns and the Dirichlet problem (trace prescribed on Gamma_N)
/// on interior unknowns. Immutable after construction; solves are const and
/// may run concurrently. Keeps a reference to `mesh`, which must outlive it.
class ElasticSolver {
public:
    ElasticSolver(const Mesh& mesh, const LameField& field, SolverOptions options = {});
    ~ElasticSolver();
    ElasticSolver(ElasticSolver&&) noexcept;
    ElasticSolver& operator=(ElasticSolver&&) = delete;

    const Mesh& mesh() const { return mesh_; }
    const LameField& field() const { return field_; }
    const SparseMatrix& stiffness() const;
    const DofMap& dof_map() const;

    /// Load vector on free unknowns for nodal Gamma_N traction coefficients.
    Eigen::VectorXd load_vector(const Eigen::VectorXd& nodal_traction) const;

    ForwardSolution solve_neumann(const SurfaceLoad& load) const;
    ForwardSolution solve_neumann_nodal(const Eigen::VectorXd& nodal_traction) const;
    /// u = trace on Gamma_N, u = 0 on Gamma_D. Values given for nodes that also
    /// touch Gamma_D are ignored.
    ForwardSolution solve_dirichlet(const Eigen::VectorXd& trace) const;

private:
    struct Impl;
    const Mesh& mesh_;
    LameField field_;
    std::unique_ptr<Impl> impl_;
};

ForwardSolution solve_neumann(const Mesh& mesh, const LameField& field, const SurfaceLoad& load,
                              SolverOptions options = {});
ForwardSolution solve_dirichlet(const Mesh& mesh, const LameField& field, const Eigen::VectorXd& trace,
                                SolverOptions options = {});

/// Per-element strain of a nodal displacement vector (2 per node).
std::vector<Eigen::Matrix2d> element_strains(const Mesh& mesh, const Eigen::VectorXd& displacement);

/// Integral of C(field) strain : strain over the mesh.
double strain_energy(const Mesh& mesh, const LameField& field, const std::vector<Eigen::Matrix2d>& strain);

/// Integral of C(d_lambda, d_mu) strain : strain for a per-element contrast.
double contrast_energy(const Mesh& mesh, const Eigen::VectorXd& d_lambda, const Eigen::VectorXd& d_mu,
                       const std::vector<Eigen::Matrix2d>& strain);

} // namespace elastinv

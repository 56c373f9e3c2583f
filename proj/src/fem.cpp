#include "elastinv/fem.hpp"

#include <array>
#include <cmath>
#include <optional>
#include <sstream>
#include <string>
#include <tuple>
#include <algorithm>

#include <Eigen/IterativeLinearSolvers>
#include <Eigen/SparseCholesky>

#include "elastinv/errors.hpp"

namespace elastinv {
namespace {

using Triplet = Eigen::Triplet<double>;
using Grad = Eigen::Matrix<double, 3, 2>;

Grad shape_gradients(const Mesh& mesh, int element) {
    const auto& t = mesh.triangles()[element];
    const auto& p0 = mesh.nodes()[t[0]];
    const auto& p1 = mesh.nodes()[t[1]];
    const auto& p2 = mesh.nodes()[t[2]];
    const double two_area = 2.0 * mesh.signed_area(element);
    Grad g;
    g << p1.y() - p2.y(), p2.x() - p1.x(),
         p2.y() - p0.y(), p0.x() - p2.x(),
         p0.y() - p1.y(), p1.x() - p0.x();
    return g / two_area;
}

// Strain-displacement matrix in Voigt order (e11, e22, gamma12 = 2 e12).
Eigen::Matrix<double, 3, 6> strain_matrix(const Grad& g) {
    Eigen::Matrix<double, 3, 6> B = Eigen::Matrix<double, 3, 6>::Zero();
    for (int i = 0; i < 3; ++i) {
        B(0, 2 * i) = g(i, 0);
        B(1, 2 * i + 1) = g(i, 1);
        B(2, 2 * i) = g(i, 1);
        B(2, 2 * i + 1) = g(i, 0);
    }
    return B;
}

using Local = Eigen::Matrix<double, 6, 6>;

// K_e = lambda * K_lambda + mu * K_mu, both exactly symmetric.
Local element_stiffness(const Mesh& mesh, int element, double lambda, double mu) {
    const auto B = strain_matrix(shape_gradients(mesh, element));
    const double area = mesh.area(element);
    Local K;
    for (int i = 0; i < 6; ++i) {
        for (int j = i; j < 6; ++j) {
            const double div_part = (B(0, i) + B(1, i)) * (B(0, j) + B(1, j));
            const double shear_part = 2.0 * (B(0, i) * B(0, j) + B(1, i) * B(1, j)) + B(2, i) * B(2, j);
            K(i, j) = area * (lambda * div_part + mu * shear_part);
            K(j, i) = K(i, j);
        }
    }
    return K;
}

double relative_residual(const SparseMatrix& A, const Eigen::VectorXd& x, const Eigen::VectorXd& b) {
    const double nb = b.norm();
    return nb == 0.0 ? (A * x).norm() : (A * x - b).norm() / nb;
}

// One SPD system with either a sparse Cholesky factor or CG behind it.
class SpdSolve {
public:
    SpdSolve(SparseMatrix A, const SolverOptions& options, const char* label)
        : A_(std::move(A)), options_(options), label_(label) {
        if (A_.rows() == 0) return;
        if (options_.kind == LinearSolverKind::Cholesky) {
            llt_ = std::make_unique<Eigen::SimplicialLLT<SparseMatrix, Eigen::Lower, Eigen::AMDOrdering<int>>>();
            llt_->compute(A_);
            if (llt_->info() != Eigen::Success)
                throw NumericError(std::string(label_) + ": stiffness matrix is not positive definite");
        } else {
            cg_ = std::make_unique<Eigen::ConjugateGradient<SparseMatrix, Eigen::Lower | Eigen::Upper>>();
            cg_->setTolerance(options_.tolerance);
            cg_->setMaxIterations(options_.max_cg_iterations);
            cg_->compute(A_);
        }
    }

    const SparseMatrix& matrix() const { return A_; }

    Eigen::VectorXd solve(const Eigen::VectorXd& b, double* residual_out) const {
        Eigen::VectorXd x = Eigen::VectorXd::Zero(b.size());
        *residual_out = 0.0;
        if (b.size() == 0 || b.norm() == 0.0) return x;
        x = raw_solve(b);
        double res = relative_residual(A_, x, b);
        // Iterative refinement against the same operator.
        for (int k = 0; k < 3 && res > options_.tolerance; ++k) {
            x += raw_solve(b - A_ * x);
            res = relative_residual(A_, x, b);
        }
        if (!std::isfinite(res) || res > options_.tolerance) {
            std::ostringstream msg;
            msg << label_ << ": linear solve residual " << res << " above tolerance " << options_.tolerance;
            if (cg_) msg << " (cg iterations " << cg_->iterations() << ")";
            throw NumericError(msg.str());
        }
        *residual_out = res;
        return x;
    }

private:
    Eigen::VectorXd raw_solve(const Eigen::VectorXd& b) const {
        if (llt_) return llt_->solve(b);
        return cg_->solve(b);
    }

    SparseMatrix A_;
    SolverOptions options_;
    const char* label_;
    std::unique_ptr<Eigen::SimplicialLLT<SparseMatrix, Eigen::Lower, Eigen::AMDOrdering<int>>> llt_;
    std::unique_ptr<Eigen::ConjugateGradient<SparseMatrix, Eigen::Lower | Eigen::Upper>> cg_;
};

SparseMatrix assemble_stiffness(const Mesh& mesh, const LameField& field, const DofMap& dofs) {
    std::vector<Triplet> triplets;
    triplets.reserve(36 * mesh.num_elements());
    for (int e = 0; e < mesh.num_elements(); ++e) {
        const Local K = element_stiffness(mesh, e, field.lambda()[e], field.mu()[e]);
        const auto& t = mesh.triangles()[e];
        std::array<int, 6> global;
        for (int i = 0; i < 3; ++i) {
            const int k = dofs.node_to_free[t[i]];
            global[2 * i] = k < 0 ? -1 : 2 * k;
            global[2 * i + 1] = k < 0 ? -1 : 2 * k + 1;
        }
        for (int i = 0; i < 6; ++i) {
            if (global[i] < 0) continue;
            for (int j = 0; j < 6; ++j)
                if (global[j] >= 0) triplets.emplace_back(global[i], global[j], K(i, j));
        }
    }
    SparseMatrix K(dofs.num_dofs(), dofs.num_dofs());
    K.setFromTriplets(triplets.begin(), triplets.end());
    return K;
}

void check_field(const Mesh& mesh, const LameField& field) {
    if (field.size() != mesh.num_elements())
        throw ParameterError("Lame field has " + std::to_string(field.size()) + " entries, mesh has " +
                             std::to_string(mesh.num_elements()) + " elements");
}

} // namespace

void LameBounds::validate() const {
    if (!(lambda_min > 0.0 && lambda_min <= lambda_max && mu_min > 0.0 && mu_min <= mu_max))
        throw ParameterError("Lame bounds must satisfy 0 < a <= b and 0 < c <= d");
}

LameField::LameField(Eigen::VectorXd lambda, Eigen::VectorXd mu, LameBounds bounds)
    : lambda_(std::move(lambda)), mu_(std::move(mu)), bounds_(bounds) {
    bounds_.validate();
    if (lambda_.size() != mu_.size()) throw ParameterError("lambda and mu arrays differ in length");
    for (Eigen::Index e = 0; e < lambda_.size(); ++e)
        if (!bounds_.contains(lambda_[e], mu_[e]))
            throw ParameterError("Lame parameters out of admissible bounds at element " + std::to_string(e));
}

LameField LameField::constant(const Mesh& mesh, double lambda, double mu, LameBounds bounds) {
    return LameField(Eigen::VectorXd::Constant(mesh.num_elements(), lambda),
                     Eigen::VectorXd::Constant(mesh.num_elements(), mu), bounds);
}

LameField LameField::sampled(const Mesh& mesh,
                             const std::function<std::pair<double, double>(const Eigen::Vector2d&)>& fn,
                             LameBounds bounds) {
    Eigen::VectorXd lambda(mesh.num_elements()), mu(mesh.num_elements());
    for (int e = 0; e < mesh.num_elements(); ++e) std::tie(lambda[e], mu[e]) = fn(mesh.centroid(e));
    return LameField(std::move(lambda), std::move(mu), bounds);
}

LameField LameField::scaled(double factor) const {
    LameBounds b = bounds_;
    if (factor > 0.0) {
        b.lambda_min = std::min(b.lambda_min, b.lambda_min * factor);
        b.lambda_max = std::max(b.lambda_max, b.lambda_max * factor);
        b.mu_min = std::min(b.mu_min, b.mu_min * factor);
        b.mu_max = std::max(b.mu_max, b.mu_max * factor);
    }
    return LameField(factor * lambda_, factor * mu_, b);
}

bool LameField::dominated_by(const LameField& other) const {
    return size() == other.size() && (lambda_.array() <= other.lambda_.array()).all() &&
           (mu_.array() <= other.mu_.array()).all();
}

SurfaceLoad SurfaceLoad::constant(const Eigen::Vector2d& g) {
    if (!g.allFinite()) throw ParameterError("surface load must be finite");
    return SurfaceLoad(g);
}

SurfaceLoad SurfaceLoad::nodal(Eigen::VectorXd values) {
    if (!values.allFinite()) throw ParameterError("surface load must be finite");
    return SurfaceLoad(std::move(values));
}

Eigen::VectorXd SurfaceLoad::nodal_values(const Mesh& mesh) const {
    const int n = mesh.num_neumann_nodes();
    if (is_constant()) {
        Eigen::VectorXd v(2 * n);
        for (int s = 0; s < n; ++s) v.segment<2>(2 * s) = constant_vector();
        return v;
    }
    const auto& v = std::get<Eigen::VectorXd>(data_);
    if (v.size() != 2 * n)
        throw ParameterError("nodal surface load has " + std::to_string(v.size()) + " entries, expected " +
                             std::to_string(2 * n));
    return v;
}

std::vector<SurfaceLoad> standard_loads() {
    return {SurfaceLoad::constant({0.1, 0.1}), SurfaceLoad::constant({0.1, 0.2}),
            SurfaceLoad::constant({0.2, 0.1}), SurfaceLoad::constant({0.3, 0.5})};
}

Eigen::Matrix2d isotropic_stress(double lambda, double mu, const Eigen::Matrix2d& strain) {
    return lambda * strain.trace() * Eigen::Matrix2d::Identity() + 2.0 * mu * strain;
}

DofMap::DofMap(const Mesh& mesh) : node_to_free(mesh.num_nodes(), -1) {
    for (int n = 0; n < mesh.num_nodes(); ++n) {
        if (mesh.is_dirichlet_node(n)) continue;
        node_to_free[n] = static_cast<int>(free_to_node.size());
        free_to_node.push_back(n);
    }
}

SparseMatrix boundary_mass_matrix(const Mesh& mesh) {
    std::vector<Triplet> triplets;
    for (const auto& e : mesh.boundary_edges()) {
        if (e.tag != BoundaryTag::Neumann) continue;
        const double len = (mesh.nodes()[e.a] - mesh.nodes()[e.b]).norm();
        const int sa = mesh.neumann_slot(e.a), sb = mesh.neumann_slot(e.b);
        for (int c = 0; c < 2; ++c) {
            triplets.emplace_back(2 * sa + c, 2 * sa + c, len / 3.0);
            triplets.emplace_back(2 * sb + c, 2 * sb + c, len / 3.0);
            triplets.emplace_back(2 * sa + c, 2 * sb + c, len / 6.0);
            triplets.emplace_back(2 * sb + c, 2 * sa + c, len / 6.0);
        }
    }
    const int n = 2 * mesh.num_neumann_nodes();
    SparseMatrix M(n, n);
    M.setFromTriplets(triplets.begin(), triplets.end());
    return M;
}

AssembledSystem assemble(const Mesh& mesh, const LameField& field, const SurfaceLoad& load) {
    check_field(mesh, field);
    AssembledSystem sys;
    sys.dof_map = DofMap(mesh);
    sys.stiffness = assemble_stiffness(mesh, field, sys.dof_map);
    const Eigen::VectorXd Mg = boundary_mass_matrix(mesh) * load.nodal_values(mesh);
    sys.load = Eigen::VectorXd::Zero(sys.dof_map.num_dofs());
    for (int s = 0; s < mesh.num_neumann_nodes(); ++s) {
        const int k = sys.dof_map.node_to_free[mesh.neumann_nodes()[s]];
        if (k >= 0) sys.load.segment<2>(2 * k) = Mg.segment<2>(2 * s);
    }
    return sys;
}

std::vector<Eigen::Matrix2d> element_strains(const Mesh& mesh, const Eigen::VectorXd& displacement) {
    if (displacement.size() != 2 * mesh.num_nodes()) throw ParameterError("displacement size mismatch");
    std::vector<Eigen::Matrix2d> strain(mesh.num_elements());
    for (int e = 0; e < mesh.num_elements(); ++e) {
        const Grad g = shape_gradients(mesh, e);
        const auto& t = mesh.triangles()[e];
        Eigen::Matrix2d du = Eigen::Matrix2d::Zero();  // du(i, j) = d u_i / d x_j
        for (int a = 0; a < 3; ++a) du += displacement.segment<2>(2 * t[a]) * g.row(a);
        strain[e] = 0.5 * (du + du.transpose());
    }
    return strain;
}

double strain_energy(const Mesh& mesh, const LameField& field, const std::vector<Eigen::Matrix2d>& strain) {
    return contrast_energy(mesh, field.lambda(), field.mu(), strain);
}

double contrast_energy(const Mesh& mesh, const Eigen::VectorXd& d_lambda, const Eigen::VectorXd& d_mu,
                       const std::vector<Eigen::Matrix2d>& strain) {
    if (d_lambda.size() != mesh.num_elements() || d_mu.size() != mesh.num_elements() ||
        static_cast<int>(strain.size()) != mesh.num_elements())
        throw ParameterError("per-element array size mismatch");
    double s = 0.0;
    for (int e = 0; e < mesh.num_elements(); ++e)
        s += mesh.area(e) * isotropic_energy_density(d_lambda[e], d_mu[e], strain[e]);
    return s;
}

struct ElasticSolver::Impl {
    DofMap dofs;
    SparseMatrix boundary_mass;
    std::optional<SpdSolve> neumann;

    // Dirichlet problem: free unknowns split into interior (I) and Gamma_N (B).
    std::vector<int> dof_to_interior;    // free dof -> interior index or -1
    std::vector<int> prescribed_dof;     // free dof of each prescribed unknown
    std::vector<int> prescribed_slot;    // matching Gamma_N trace entry
    SparseMatrix coupling;               // K_IB
    std::optional<SpdSolve> dirichlet;
};

ElasticSolver::ElasticSolver(const Mesh& mesh, const LameField& field, SolverOptions options)
    : mesh_(mesh), field_(field), impl_(std::make_unique<Impl>()) {
    check_field(mesh, field);
    auto& im = *impl_;
    im.dofs = DofMap(mesh);
    im.boundary_mass = boundary_mass_matrix(mesh);
    SparseMatrix K = assemble_stiffness(mesh, field, im.dofs);

    const int n = im.dofs.num_dofs();
    im.dof_to_interior.assign(n, -1);
    int interior = 0;
    for (int k = 0; k < static_cast<int>(im.dofs.free_to_node.size()); ++k) {
        const int node = im.dofs.free_to_node[k];
        const int slot = mesh.neumann_slot(node);
        for (int c = 0; c < 2; ++c) {
            if (slot >= 0) {
                im.prescribed_dof.push_back(2 * k + c);
                im.prescribed_slot.push_back(2 * slot + c);
            } else {
                im.dof_to_interior[2 * k + c] = interior++;
            }
        }
    }
    std::vector<int> dof_to_prescribed(n, -1);
    for (int p = 0; p < static_cast<int>(im.prescribed_dof.size()); ++p) dof_to_prescribed[im.prescribed_dof[p]] = p;

    std::vector<Triplet> kii, kib;
    for (int col = 0; col < K.outerSize(); ++col) {
        for (SparseMatrix::InnerIterator it(K, col); it; ++it) {
            const int ri = im.dof_to_interior[it.row()];
            if (ri < 0) continue;
            const int ci = im.dof_to_interior[it.col()];
            if (ci >= 0)
                kii.emplace_back(ri, ci, it.value());
            else
                kib.emplace_back(ri, dof_to_prescribed[it.col()], it.value());
        }
    }
    SparseMatrix Kii(interior, interior);
    Kii.setFromTriplets(kii.begin(), kii.end());
    im.coupling.resize(interior, static_cast<int>(im.prescribed_dof.size()));
    im.coupling.setFromTriplets(kib.begin(), kib.end());

    im.neumann.emplace(std::move(K), options, "neumann problem");
    im.dirichlet.emplace(std::move(Kii), options, "dirichlet problem");
}

ElasticSolver::~ElasticSolver() = default;
ElasticSolver::ElasticSolver(ElasticSolver&&) noexcept = default;

const SparseMatrix& ElasticSolver::stiffness() const { return impl_->neumann->matrix(); }
const DofMap& ElasticSolver::dof_map() const { return impl_->dofs; }

Eigen::VectorXd ElasticSolver::load_vector(const Eigen::VectorXd& nodal_traction) const {
    if (nodal_traction.size() != 2 * mesh_.num_neumann_nodes())
        throw ParameterError("nodal traction size mismatch");
    const Eigen::VectorXd Mg = impl_->boundary_mass * nodal_traction;
    Eigen::VectorXd b = Eigen::VectorXd::Zero(impl_->dofs.num_dofs());
    for (int s = 0; s < mesh_.num_neumann_nodes(); ++s) {
        const int k = impl_->dofs.node_to_free[mesh_.neumann_nodes()[s]];
        if (k >= 0) b.segment<2>(2 * k) = Mg.segment<2>(2 * s);
    }
    return b;
}

namespace {

ForwardSolution finish_solution(const Mesh& mesh, Eigen::VectorXd displacement, double residual) {
    ForwardSolution sol;
    sol.displacement = std::move(displacement);
    sol.trace_on_neumann.resize(2 * mesh.num_neumann_nodes());
    for (int s = 0; s < mesh.num_neumann_nodes(); ++s)
        sol.trace_on_neumann.segment<2>(2 * s) = sol.displacement.segment<2>(2 * mesh.neumann_nodes()[s]);
    sol.strain = element_strains(mesh, sol.displacement);
    sol.divergence.resize(mesh.num_elements());
    for (int e = 0; e < mesh.num_elements(); ++e) sol.divergence[e] = sol.strain[e].trace();
    sol.relative_residual = residual;
    return sol;
}

} // namespace

ForwardSolution ElasticSolver::solve_neumann(const SurfaceLoad& load) const {
    return solve_neumann_nodal(load.nodal_values(mesh_));
}

ForwardSolution ElasticSolver::solve_neumann_nodal(const Eigen::VectorXd& nodal_traction) const {
    double residual = 0.0;
    const Eigen::VectorXd u = impl_->neumann->solve(load_vector(nodal_traction), &residual);
    Eigen::VectorXd displacement = Eigen::VectorXd::Zero(2 * mesh_.num_nodes());
    for (int k = 0; k < static_cast<int>(impl_->dofs.free_to_node.size()); ++k)
        displacement.segment<2>(2 * impl_->dofs.free_to_node[k]) = u.segment<2>(2 * k);
    return finish_solution(mesh_, std::move(displacement), residual);
}

ForwardSolution ElasticSolver::solve_dirichlet(const Eigen::VectorXd& trace) const {
    if (trace.size() != 2 * mesh_.num_neumann_nodes()) throw ParameterError("trace data size mismatch");
    if (!trace.allFinite()) throw ParameterError("trace data must be finite");
    const auto& im = *impl_;
    Eigen::VectorXd prescribed(im.prescribed_dof.size());
    for (int p = 0; p < prescribed.size(); ++p) prescribed[p] = trace[im.prescribed_slot[p]];

    double residual = 0.0;
    const Eigen::VectorXd rhs = -(im.coupling * prescribed);
    const Eigen::VectorXd ui = im.dirichlet->solve(rhs, &residual);

    Eigen::VectorXd free(im.dofs.num_dofs());
    for (int d = 0; d < im.dofs.num_dofs(); ++d)
        if (im.dof_to_interior[d] >= 0) free[d] = ui[im.dof_to_interior[d]];
    for (int p = 0; p < prescribed.size(); ++p) free[im.prescribed_dof[p]] = prescribed[p];

    Eigen::VectorXd displacement = Eigen::VectorXd::Zero(2 * mesh_.num_nodes());
    for (int k = 0; k < static_cast<int>(im.dofs.free_to_node.size()); ++k)
        displacement.segment<2>(2 * im.dofs.free_to_node[k]) = free.segment<2>(2 * k);
    return finish_solution(mesh_, std::move(displacement), residual);
}

ForwardSolution solve_neumann(const Mesh& mesh, const LameField& field, const SurfaceLoad& load,
                              SolverOptions options) {
    return ElasticSolver(mesh, field, options).solve_neumann(load);
}

ForwardSolution solve_dirichlet(const Mesh& mesh, const LameField& field, const Eigen::VectorXd& trace,
                                SolverOptions options) {
    return ElasticSolver(mesh, field, options).solve_dirichlet(trace);
}

} // namespace elastinv

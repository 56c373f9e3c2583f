#include <gtest/gtest.h>

#include <cmath>

#include <Eigen/Dense>

#include "elastinv/errors.hpp"
#include "elastinv/fem.hpp"
#include "test_support.hpp"

namespace elastinv {
namespace {

using testing::random_field;

class FemTest : public ::testing::Test {
protected:
    Mesh mesh = make_disk_mesh(0.2);
};

TEST_F(FemTest, StiffnessMatchesDenseAssembly) {
    const LameField field = random_field(mesh, 3);
    const ElasticSolver solver(mesh, field);
    const Eigen::MatrixXd full = testing::dense_stiffness(mesh, field);
    const DofMap& dofs = solver.dof_map();
    const Eigen::MatrixXd K = Eigen::MatrixXd(solver.stiffness());
    ASSERT_EQ(K.rows(), dofs.num_dofs());
    double worst = 0.0;
    for (int i = 0; i < dofs.num_dofs(); ++i)
        for (int j = 0; j < dofs.num_dofs(); ++j) {
            const int gi = 2 * dofs.free_to_node[i / 2] + i % 2, gj = 2 * dofs.free_to_node[j / 2] + j % 2;
            worst = std::max(worst, std::abs(K(i, j) - full(gi, gj)));
        }
    EXPECT_LT(worst, 1e-12 * full.cwiseAbs().maxCoeff());
    EXPECT_EQ((K - K.transpose()).cwiseAbs().maxCoeff(), 0.0);
}

TEST_F(FemTest, FullStiffnessAnnihilatesRigidMotions) {
    const Eigen::MatrixXd K = testing::dense_stiffness(mesh, random_field(mesh, 5));
    Eigen::VectorXd tx(2 * mesh.num_nodes()), rot(2 * mesh.num_nodes());
    for (int n = 0; n < mesh.num_nodes(); ++n) {
        tx.segment<2>(2 * n) << 1.0, 0.0;
        rot.segment<2>(2 * n) << -mesh.nodes()[n].y(), mesh.nodes()[n].x();
    }
    EXPECT_LT((K * tx).norm(), 1e-12);
    EXPECT_LT((K * rot).norm(), 1e-12);
    for (const auto& s : element_strains(mesh, rot)) EXPECT_LT(s.norm(), 1e-14);
}

TEST_F(FemTest, LinearDisplacementHasExactConstantStrain) {
    Eigen::Matrix2d A;
    A << 0.3, -0.2, 0.5, 0.1;
    Eigen::VectorXd u(2 * mesh.num_nodes());
    for (int n = 0; n < mesh.num_nodes(); ++n) u.segment<2>(2 * n) = A * mesh.nodes()[n];
    const Eigen::Matrix2d sym = 0.5 * (A + A.transpose());
    for (const auto& s : element_strains(mesh, u)) EXPECT_LT((s - sym).cwiseAbs().maxCoeff(), 1e-13);
}

TEST_F(FemTest, BoundaryMassMatchesQuadrature) {
    const Eigen::MatrixXd M = Eigen::MatrixXd(boundary_mass_matrix(mesh));
    const Eigen::MatrixXd ref = testing::dense_boundary_mass(mesh);
    EXPECT_LT((M - ref).cwiseAbs().maxCoeff(), 1e-15);
    // 1^T M_x 1 is the length of Gamma_N.
    double length = 0.0;
    for (const auto& e : mesh.boundary_edges())
        if (e.tag == BoundaryTag::Neumann) length += (mesh.nodes()[e.a] - mesh.nodes()[e.b]).norm();
    Eigen::VectorXd ones_x = Eigen::VectorXd::Zero(M.rows());
    for (int k = 0; k < mesh.num_neumann_nodes(); ++k) ones_x[2 * k] = 1.0;
    EXPECT_NEAR(ones_x.dot(M * ones_x), length, 1e-14);
    EXPECT_GT(Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(M).eigenvalues().minCoeff(), 0.0);
}

TEST_F(FemTest, LoadVectorIsMassTimesTraction) {
    const ElasticSolver solver(mesh, LameField::constant(mesh, 3, 7));
    const Eigen::VectorXd g = SurfaceLoad::constant({0.3, 0.5}).nodal_values(mesh);
    const Eigen::VectorXd Mg = testing::dense_boundary_mass(mesh) * g;
    const Eigen::VectorXd b = solver.load_vector(g);
    const DofMap& dofs = solver.dof_map();
    for (int k = 0; k < dofs.num_dofs() / 2; ++k) {
        const int slot = mesh.neumann_slot(dofs.free_to_node[k]);
        const Eigen::Vector2d expected = slot < 0 ? Eigen::Vector2d::Zero() : Eigen::Vector2d(Mg.segment<2>(2 * slot));
        EXPECT_NEAR(b[2 * k], expected.x(), 1e-15);
        EXPECT_NEAR(b[2 * k + 1], expected.y(), 1e-15);
    }
}

TEST_F(FemTest, NeumannSolutionSatisfiesSystem) {
    const LameField field = random_field(mesh, 9);
    for (const auto& load : standard_loads()) {
        const ForwardSolution u = solve_neumann(mesh, field, load);
        EXPECT_LE(u.relative_residual, 1e-12);
        for (int n : mesh.dirichlet_nodes()) EXPECT_EQ(u.displacement.segment<2>(2 * n).norm(), 0.0);
        for (int k = 0; k < mesh.num_neumann_nodes(); ++k)
            EXPECT_EQ(u.trace_on_neumann.segment<2>(2 * k), u.displacement.segment<2>(2 * mesh.neumann_nodes()[k]));
        for (int e = 0; e < mesh.num_elements(); ++e) EXPECT_NEAR(u.divergence[e], u.strain[e].trace(), 1e-15);
    }
}

TEST_F(FemTest, ConjugateGradientAgreesWithCholesky) {
    const LameField field = random_field(mesh, 10);
    const auto load = SurfaceLoad::constant({0.2, 0.1});
    const ForwardSolution a = solve_neumann(mesh, field, load);
    const ForwardSolution b = solve_neumann(mesh, field, load, {LinearSolverKind::ConjugateGradient, 1e-12, 20000});
    EXPECT_LE(b.relative_residual, 1e-12);
    EXPECT_LT((a.displacement - b.displacement).norm(), 1e-9 * a.displacement.norm());
}

TEST_F(FemTest, EnergyIdentity) {
    const SparseMatrix M = boundary_mass_matrix(mesh);
    for (std::uint64_t seed = 0; seed < 4; ++seed) {
        const LameField field = random_field(mesh, 100 + seed);
        for (const auto& load : standard_loads()) {
            const Eigen::VectorXd g = load.nodal_values(mesh);
            const ForwardSolution u = solve_neumann(mesh, field, load);
            const double work = (M * g).dot(u.trace_on_neumann);
            const double energy = strain_energy(mesh, field, u.strain);
            EXPECT_NEAR(work, energy, 1e-10 * energy);
        }
    }
}

TEST_F(FemTest, ScalingTheTensorScalesTheSolution) {
    const LameField field = random_field(mesh, 12);
    const auto load = SurfaceLoad::constant({0.1, 0.2});
    const ForwardSolution a = solve_neumann(mesh, field, load);
    const ForwardSolution b = solve_neumann(mesh, field.scaled(2.0), load);
    EXPECT_LT((a.displacement - 2.0 * b.displacement).norm(), 1e-11 * a.displacement.norm());
}

TEST_F(FemTest, BettiReciprocity) {
    const LameField field = random_field(mesh, 13);
    const ElasticSolver solver(mesh, field);
    const SparseMatrix M = boundary_mass_matrix(mesh);
    const auto loads = standard_loads();
    const Eigen::VectorXd g1 = loads[0].nodal_values(mesh), g2 = loads[3].nodal_values(mesh);
    const double a = (M * g1).dot(solver.solve_neumann_nodal(g2).trace_on_neumann);
    const double b = (M * g2).dot(solver.solve_neumann_nodal(g1).trace_on_neumann);
    EXPECT_NEAR(a, b, 1e-12 * std::abs(a));
}

TEST_F(FemTest, DirichletSolveReproducesNeumannSolution) {
    const LameField field = random_field(mesh, 14);
    const ElasticSolver solver(mesh, field);
    const ForwardSolution n = solver.solve_neumann(SurfaceLoad::constant({0.3, 0.5}));
    const ForwardSolution d = solver.solve_dirichlet(n.trace_on_neumann);
    EXPECT_LE(d.relative_residual, 1e-12);
    EXPECT_LT((d.displacement - n.displacement).cwiseAbs().maxCoeff(), 1e-12 * n.displacement.cwiseAbs().maxCoeff());
}

TEST_F(FemTest, DirichletIgnoresJunctionValues) {
    const ElasticSolver solver(mesh, LameField::constant(mesh, 1, 1));
    Eigen::VectorXd trace = Eigen::VectorXd::Zero(2 * mesh.num_neumann_nodes());
    for (int k = 0; k < mesh.num_neumann_nodes(); ++k)
        if (mesh.is_dirichlet_node(mesh.neumann_nodes()[k])) trace.segment<2>(2 * k) << 5.0, 5.0;
    EXPECT_EQ(solver.solve_dirichlet(trace).displacement.norm(), 0.0);
}

TEST_F(FemTest, EnergyConvergesUnderRefinement) {
    const auto load = SurfaceLoad::constant({0.3, 0.5});
    const Mesh m1 = make_disk_mesh(0.25), m2 = refine_uniform(m1), m3 = refine_uniform(m2);
    double energy[3];
    const Mesh* meshes[3] = {&m1, &m2, &m3};
    for (int i = 0; i < 3; ++i) {
        const LameField f = LameField::constant(*meshes[i], 3, 7);
        energy[i] = strain_energy(*meshes[i], f, solve_neumann(*meshes[i], f, load).strain);
    }
    // Conforming Galerkin energy increases monotonically toward the limit.
    EXPECT_LT(energy[0], energy[1]);
    EXPECT_LT(energy[1], energy[2]);
    EXPECT_LT(energy[2] - energy[1], energy[1] - energy[0]);
}

TEST(LameFieldTest, RejectsInvalidValues) {
    const Mesh mesh = make_disk_mesh(0.3);
    EXPECT_THROW(LameField::constant(mesh, -1.0, 1.0), ParameterError);
    EXPECT_THROW(LameField::constant(mesh, 1.0, 0.0), ParameterError);
    EXPECT_THROW(LameField::constant(mesh, 1.0, std::nan("")), ParameterError);
    EXPECT_THROW(LameField::constant(mesh, 2.0, 1.0, {0.0, 1.0, 0.0, 1.0}), ParameterError);
    EXPECT_THROW(LameField(Eigen::VectorXd::Ones(3), Eigen::VectorXd::Ones(4)), ParameterError);
    EXPECT_THROW((LameBounds{2.0, 1.0, 1.0, 2.0}.validate()), ParameterError);
    EXPECT_THROW(solve_neumann(mesh, LameField(Eigen::VectorXd::Ones(3), Eigen::VectorXd::Ones(3)),
                               SurfaceLoad::constant({1, 0})),
                 ParameterError);
}

TEST(LameFieldTest, Ordering) {
    const Mesh mesh = make_disk_mesh(0.3);
    const LameField a = LameField::constant(mesh, 1, 2), b = LameField::constant(mesh, 1, 3);
    EXPECT_TRUE(a.dominated_by(b));
    EXPECT_FALSE(b.dominated_by(a));
    EXPECT_TRUE(a.dominated_by(a));
}

TEST(Pointwise, StressAndEnergyDensity) {
    Eigen::Matrix2d e;
    e << 0.1, 0.05, 0.05, -0.2;
    const Eigen::Matrix2d s = isotropic_stress(3.0, 7.0, e);
    Eigen::Matrix2d expected;
    expected << 3.0 * -0.1 + 14.0 * 0.1, 14.0 * 0.05, 14.0 * 0.05, 3.0 * -0.1 + 14.0 * -0.2;
    EXPECT_LT((s - expected).norm(), 1e-15);
    EXPECT_NEAR(isotropic_energy_density(3.0, 7.0, e), s.cwiseProduct(e).sum(), 1e-15);
}

TEST(SurfaceLoadTest, NodalSizeChecked) {
    const Mesh mesh = make_disk_mesh(0.3);
    EXPECT_THROW(SurfaceLoad::nodal(Eigen::VectorXd::Ones(3)).nodal_values(mesh), ParameterError);
    Eigen::VectorXd v = Eigen::VectorXd::Ones(2 * mesh.num_neumann_nodes());
    EXPECT_EQ(SurfaceLoad::nodal(v).nodal_values(mesh), v);
    v[0] = std::nan("");
    EXPECT_THROW(SurfaceLoad::nodal(v).nodal_values(mesh), ParameterError);
    const auto loads = standard_loads();
    ASSERT_EQ(loads.size(), 4u);
    EXPECT_EQ(loads[3].constant_vector(), Eigen::Vector2d(0.3, 0.5));
}

} // namespace
} // namespace elastinv

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "elastinv/errors.hpp"
#include "elastinv/experiments.hpp"

namespace elastinv {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

fs::path scratch(const std::string& name) {
    const fs::path p = fs::temp_directory_path() / "elastinv_tests" / name;
    fs::remove_all(p);
    return p;
}

std::string slurp(const fs::path& p) {
    std::ifstream is(p, std::ios::binary);
    std::ostringstream os;
    os << is.rdbuf();
    return os.str();
}

TEST(Config, RoundTripEveryKind) {
    for (auto kind : {ExperimentKind::Example1, ExperimentKind::Example2, ExperimentKind::Example3,
                      ExperimentKind::Monotonicity, ExperimentKind::Stability, ExperimentKind::Forward,
                      ExperimentKind::Custom}) {
        const ExperimentConfig c = default_config(kind);
        EXPECT_NO_THROW(c.validate()) << to_string(kind);
        const json doc = to_json(c);
        const ExperimentConfig back = config_from_json(doc);
        EXPECT_EQ(back, c) << to_string(kind);
        EXPECT_EQ(to_json(back).dump(), doc.dump());
        EXPECT_EQ(parse_experiment_kind(to_string(kind)), kind);
    }
}

TEST(Config, RoundTripThroughText) {
    ExperimentConfig c = default_config(ExperimentKind::Custom);
    c.mesh.dirichlet_arc = {0.1, 2.3};
    c.settings = {{0.013, 3.3e-7}};
    c.noise_seed = 18446744073709551557ull;
    c.inversion.initial_step = 1.0 / 3.0;
    const ExperimentConfig back = config_from_json(json::parse(to_json(c).dump(2)));
    EXPECT_EQ(back, c);
}

TEST(Config, MinimalDocumentGetsDefaults) {
    const ExperimentConfig c = config_from_json(json{{"schema_version", 1}, {"kind", "example2"}});
    EXPECT_EQ(c, default_config(ExperimentKind::Example2));
    const ExperimentConfig d =
        config_from_json(json{{"schema_version", 1}, {"kind", "example1"}, {"mesh", {{"target_h", 0.2}}}});
    EXPECT_EQ(d.mesh.target_h, 0.2);
    EXPECT_EQ(d.mesh.dirichlet_arc, default_config(ExperimentKind::Example1).mesh.dirichlet_arc);
}

TEST(Config, Rejections) {
    const auto bad = [](json doc) { EXPECT_THROW(config_from_json(doc), ConfigError) << doc.dump(); };
    bad(json{{"kind", "example1"}});
    bad(json{{"schema_version", 2}, {"kind", "example1"}});
    bad(json{{"schema_version", 1}});
    bad(json{{"schema_version", 1}, {"kind", "example9"}});
    bad(json{{"schema_version", 1}, {"kind", "example1"}, {"colour", "blue"}});
    bad(json{{"schema_version", 1}, {"kind", "example1"}, {"mesh", {{"target_hh", 0.1}}}});
    bad(json{{"schema_version", 1}, {"kind", "example1"}, {"mesh", {{"target_h", "small"}}}});
    bad(json{{"schema_version", 1}, {"kind", "example1"}, {"mesh", {{"target_h", 1.5}}}});
    bad(json{{"schema_version", 1}, {"kind", "example1"}, {"settings", {{{"epsilon", 1.0}, {"rho", 0}}}}});
    bad(json{{"schema_version", 1}, {"kind", "example1"}, {"settings", json::array()}});
    bad(json{{"schema_version", 1}, {"kind", "example1"}, {"data_mesh", "coarser"}});
    bad(json{{"schema_version", 1}, {"kind", "example1"}, {"truth", {{"type", "file"}, {"path", "/nonexistent"}}}});
    bad(json{{"schema_version", 1}, {"kind", "example1"}, {"inversion", {{"initial", {-1.0, 1.0}}}}});
    bad(json{{"schema_version", 1}, {"kind", "example1"}, {"mesh", {{"dirichlet_arc", {0.0, 7.0}}}}});
    bad(json::array());
    EXPECT_THROW(load_config("/nonexistent/config.json"), ConfigError);
}

TEST(Builders, TruthFields) {
    const Mesh mesh = make_disk_mesh(0.08);
    TruthSpec t;
    t.type = "radial_mu";
    t.lambda = 1.0;
    const LameField radial = build_truth(mesh, t);
    for (int e = 0; e < mesh.num_elements(); e += 37) {
        EXPECT_EQ(radial.lambda()[e], 1.0);
        EXPECT_DOUBLE_EQ(radial.mu()[e], mesh.centroid(e).norm());
    }
    t.type = "gaussian_bumps_lambda";
    const LameField bumps = build_truth(mesh, t);
    const auto c = top_fraction_centroids(mesh, bumps.lambda());
    EXPECT_LE(bump_matching_error(c, kBumpCentres), 0.1);
}

TEST(Builders, InversionConfigFromSpec) {
    const Mesh mesh = make_disk_mesh(0.3);
    const ExperimentConfig c = default_config(ExperimentKind::Example2);
    const InversionConfig inv = build_inversion_config(c.inversion, mesh, 1e-4);
    EXPECT_EQ(inv.parameterization, ParameterizationKind::Elementwise);
    EXPECT_EQ(inv.rho, 1e-4);
    EXPECT_TRUE(inv.project);
    EXPECT_EQ(inv.initial_field.lambda()[0], 0.3);
    EXPECT_EQ(inv.initial_field.mu()[0], 0.5);
}

TEST(Metrics, RelativeL2AndMatching) {
    const Mesh mesh = make_disk_mesh(0.3);
    const Eigen::VectorXd a = Eigen::VectorXd::Constant(mesh.num_elements(), 2.0);
    EXPECT_NEAR(relative_l2_error(mesh, a * 1.1, a), 0.1, 1e-14);
    EXPECT_DOUBLE_EQ(relative_l2_error(mesh, a, a), 0.0);
    const std::array<Eigen::Vector2d, 2> swapped{kBumpCentres[1], kBumpCentres[0]};
    EXPECT_DOUBLE_EQ(bump_matching_error(swapped, kBumpCentres), 0.0);
    const std::array<Eigen::Vector2d, 2> off{Eigen::Vector2d(0.5, 0.7), Eigen::Vector2d(-0.5, -0.5)};
    EXPECT_NEAR(bump_matching_error(off, kBumpCentres), 0.2, 1e-15);
}

TEST(FieldIo, RoundTrip) {
    const Mesh mesh = make_disk_mesh(0.3);
    const LameField f = LameField::sampled(mesh, [](const Eigen::Vector2d& x) {
        return std::pair{1.0 / 3.0 + x.x() * x.x(), std::exp(x.y())};
    });
    const fs::path dir = scratch("field_io");
    fs::create_directories(dir);
    write_field(dir / "f.txt", mesh, f);
    const LameField g = read_field(dir / "f.txt");
    EXPECT_EQ(g.lambda(), f.lambda());
    EXPECT_EQ(g.mu(), f.mu());
    std::ofstream(dir / "bad.txt") << "elastinv-field 1\nelements 3\n0 0 1 1\n";
    EXPECT_THROW(read_field(dir / "bad.txt"), ConfigError);
}

ExperimentConfig small_example1(const fs::path& out) {
    ExperimentConfig c = default_config(ExperimentKind::Example1);
    c.mesh.target_h = 0.25;
    c.output = out.string();
    return c;
}

TEST(Runs, Example1BundleIsConsistent) {
    const fs::path out = scratch("example1");
    const ResultBundle b = run_experiment(small_example1(out));
    EXPECT_EQ(b.violations, 0);
    const json doc = json::parse(slurp(out / "bundle.json"));
    EXPECT_EQ(doc, b.document);
    EXPECT_EQ(doc["status"], "complete");
    EXPECT_EQ(config_from_json(json::parse(slurp(out / "config.json"))), small_example1(out));
    EXPECT_FALSE(doc["config"].contains("output"));
    ASSERT_EQ(doc["rows"].size(), 3u);

    // Errors in the bundle are recomputable from the written field files.
    const Mesh mesh = build_mesh(small_example1(out).mesh);
    for (const auto& row : doc["rows"]) {
        const LameField f = read_field(out / row["field_file"].get<std::string>());
        const double lc = f.lambda().mean(), mc = f.mu().mean();
        EXPECT_NEAR(row["relative_error"][0].get<double>(), std::abs(lc - 3.0) / 3.0, 1e-12);
        EXPECT_NEAR(row["relative_error"][1].get<double>(), std::abs(mc - 7.0) / 7.0, 1e-12);
        std::ifstream hist(out / row["history_file"].get<std::string>());
        std::string header;
        std::getline(hist, header);
        EXPECT_EQ(header, "iteration,J,grad_sup,step");
        int lines = 0;
        for (std::string line; std::getline(hist, line);) ++lines;
        EXPECT_EQ(lines, row["iterations"].get<int>() + 1);
    }
    EXPECT_LE(doc["rows"][0]["relative_error"][0].get<double>(), 1e-3);
    std::ifstream mesh_file(out / "mesh.txt");
    EXPECT_EQ(read_mesh(mesh_file).num_elements(), mesh.num_elements());
}

TEST(Runs, Deterministic) {
    const fs::path a = scratch("det_a"), b = scratch("det_b");
    ExperimentConfig ca = small_example1(a), cb = small_example1(b);
    run_experiment(ca);
    run_experiment(cb);
    EXPECT_EQ(slurp(a / "bundle.json"), slurp(b / "bundle.json"));
    for (const char* f : {"field_1.txt", "history_2.csv", "mesh.txt"}) EXPECT_EQ(slurp(a / f), slurp(b / f)) << f;
}

TEST(Runs, RefinedDataMesh) {
    ExperimentConfig c = small_example1(scratch("refined"));
    c.data_mesh = "refine";
    c.settings = {{0.0, 0.0}};
    const ResultBundle b = run_experiment(c);
    const auto& row = b.document["rows"][0];
    EXPECT_GT(row["final_J"].get<double>(), 0.0);
    EXPECT_LT(row["relative_error"][0].get<double>(), 0.5);
    EXPECT_LT(row["relative_error"][1].get<double>(), 0.1);
}

TEST(Runs, CampaignsAndEmptyFamily) {
    ExperimentConfig m = default_config(ExperimentKind::Monotonicity);
    m.mesh.target_h = 0.25;
    m.campaign.pairs = 3;
    m.output = scratch("mono").string();
    const ResultBundle mb = run_experiment(m);
    EXPECT_EQ(mb.violations, 0);
    EXPECT_EQ(mb.document["pairs"].size(), 3u);

    ExperimentConfig s = default_config(ExperimentKind::Stability);
    s.mesh.target_h = 0.25;
    s.campaign.pairs = 0;
    s.output = scratch("stab_empty").string();
    const ResultBundle sb = run_experiment(s);
    EXPECT_EQ(sb.violations, 0);
    EXPECT_TRUE(sb.document["entries"].empty());
    EXPECT_EQ(sb.document["status"], "complete");
}

TEST(Runs, ForwardEnergyBalance) {
    ExperimentConfig c = default_config(ExperimentKind::Forward);
    c.mesh.target_h = 0.25;
    c.output = scratch("forward").string();
    const ResultBundle b = run_experiment(c);
    ASSERT_EQ(b.document["rows"].size(), 4u);
    for (const auto& row : b.document["rows"]) {
        const double w = row["boundary_work"], e = row["strain_energy"];
        EXPECT_NEAR(w, e, 1e-10 * e);
        EXPECT_TRUE(fs::exists(fs::path(c.output) / row["displacement_file"].get<std::string>()));
    }
}

TEST(Runs, FailureLeavesPartialBundle) {
    const fs::path out = scratch("partial");
    fs::create_directories(out.parent_path());
    const fs::path field = out.parent_path() / "mismatched_field.txt";
    std::ofstream(field) << "elastinv-field 1\nelements 2\n0 0 1 1\n0 0 1 1\n";
    ExperimentConfig c = small_example1(out);
    c.truth.type = "file";
    c.truth.path = field.string();
    EXPECT_THROW(run_experiment(c), ConfigError);
    const json doc = json::parse(slurp(out / "bundle.json"));
    EXPECT_EQ(doc["status"], "partial");
    EXPECT_TRUE(doc.contains("error"));
}

TEST(Runs, FileTruthMatchesAnalytic) {
    const fs::path out = scratch("file_truth");
    fs::create_directories(out);
    ExperimentConfig c = small_example1(out / "run");
    c.settings = {{0.0, 0.0}};
    const Mesh mesh = build_mesh(c.mesh);
    write_field(out / "truth.txt", mesh, LameField::constant(mesh, 3, 7));
    c.truth.type = "file";
    c.truth.path = (out / "truth.txt").string();
    const ResultBundle b = run_experiment(c);
    EXPECT_LE(b.document["rows"][0]["relative_error"][0].get<double>(), 1e-3);
}

} // namespace
} // namespace elastinv

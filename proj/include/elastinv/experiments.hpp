#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "elastinv/fem.hpp"
#include "elastinv/inversion.hpp"
#include "elastinv/mesh.hpp"

namespace elastinv {

inline constexpr int kConfigSchemaVersion = 1;

enum class ExperimentKind { Example1, Example2, Example3, Monotonicity, Stability, Forward, Custom };

std::string to_string(ExperimentKind kind);
ExperimentKind parse_experiment_kind(const std::string& name);

struct MeshSpec {
    double target_h = 0.08;
    std::array<double, 2> dirichlet_arc{std::numbers::pi, 2.0 * std::numbers::pi};
    bool operator==(const MeshSpec&) const = default;
};

/// constant | radial_mu | gaussian_bumps_lambda | file
struct TruthSpec {
    std::string type = "constant";
    double lambda = 3.0;
    double mu = 7.0;
    std::string path;
    bool operator==(const TruthSpec&) const = default;
};

struct NoiseRho {
    double epsilon = 0.0;
    double rho = 0.0;
    bool operator==(const NoiseRho&) const = default;
};

struct InversionSpec {
    std::string parameterization = "constant";  // constant | elementwise
    std::array<double, 2> initial{1.0, 1.0};
    int max_iterations = 500;
    double gradient_tolerance = 1e-12;
    double relative_gradient_tolerance = 0.0;
    double initial_step = 0.1;
    int memory = -1;
    double sufficient_decrease = 1e-4;
    double backtrack_factor = 0.5;
    bool project = false;
    std::array<double, 4> bounds{1e-6, 1e6, 1e-6, 1e6};
    bool operator==(const InversionSpec&) const = default;
};

struct CampaignSpec {
    int pairs = 20;
    std::uint64_t seed = 7;
    std::array<double, 4> box{1.0, 10.0, 1.0, 10.0};
    double tolerance = 1e-8;
    bool operator==(const CampaignSpec&) const = default;
};

/// Declarative description of one run. Every field has a default, so a config
/// file only needs `schema_version` and `kind`; `default_config(kind)` fills
/// the per-experiment defaults before the file is overlaid.
struct ExperimentConfig {
    int schema_version = kConfigSchemaVersion;
    ExperimentKind kind = ExperimentKind::Custom;
    MeshSpec mesh;
    std::string data_mesh = "same";  // same | refine
    TruthSpec truth;
    std::vector<std::array<double, 2>> loads;
    std::vector<NoiseRho> settings;
    std::uint64_t noise_seed = 1;
    bool centered_noise = false;
    InversionSpec inversion;
    CampaignSpec campaign;
    std::string output = "results";

    bool operator==(const ExperimentConfig&) const = default;

    /// Throws ConfigError on any invalid value or missing referenced file.
    void validate() const;
};

ExperimentConfig default_config(ExperimentKind kind);

nlohmann::json to_json(const ExperimentConfig& config);
/// Overlays `doc` on default_config(kind in doc). Throws ConfigError.
ExperimentConfig config_from_json(const nlohmann::json& doc);
ExperimentConfig load_config(const std::filesystem::path& path);

Mesh build_mesh(const MeshSpec& spec);
LameField build_truth(const Mesh& mesh, const TruthSpec& spec);
std::vector<SurfaceLoad> build_loads(const ExperimentConfig& config);
InversionConfig build_inversion_config(const InversionSpec& spec, const Mesh& mesh, double rho);

/// Per-element field table: "elastinv-field 1", "elements <N>", then one
/// "<cx> <cy> <lambda> <mu>" line per element (centroid, values).
void write_field(const std::filesystem::path& path, const Mesh& mesh, const LameField& field);
LameField read_field(const std::filesystem::path& path, LameBounds bounds = {});

/// Area-weighted ||a - b||_L2 / ||b||_L2.
double relative_l2_error(const Mesh& mesh, const Eigen::VectorXd& a, const Eigen::VectorXd& b);

/// Two cluster centres (2-means, area-weighted) of the elements in the top
/// `fraction` of `values`. Seeds: the largest value and the selected element
/// farthest from it.
std::array<Eigen::Vector2d, 2> top_fraction_centroids(const Mesh& mesh, const Eigen::VectorXd& values,
                                                      double fraction = 0.1);

/// Largest centre-to-bump distance under the better one-to-one matching.
double bump_matching_error(const std::array<Eigen::Vector2d, 2>& centres,
                           const std::array<Eigen::Vector2d, 2>& bumps);

inline const std::array<Eigen::Vector2d, 2> kBumpCentres{Eigen::Vector2d(0.5, 0.5), Eigen::Vector2d(-0.5, -0.5)};

/// What a run produced. `document` is exactly what lands in bundle.json.
struct ResultBundle {
    nlohmann::json document;
    int violations = 0;
};

/// Writes config.json, bundle.json, mesh.txt and per-run history/field files
/// into config.output. On failure a bundle with "status": "partial" and the
/// error is written before the exception propagates.
ResultBundle run_experiment(const ExperimentConfig& config);

ResultBundle run_example1(const ExperimentConfig& config);
ResultBundle run_example2(const ExperimentConfig& config);
ResultBundle run_example3(const ExperimentConfig& config);
ResultBundle run_property_campaigns(const ExperimentConfig& config);
ResultBundle run_forward(const ExperimentConfig& config);

/// CLI exit codes.
inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitConfigError = 2;
inline constexpr int kExitSolverFailure = 3;
inline constexpr int kExitInvariantViolation = 4;

} // namespace elastinv

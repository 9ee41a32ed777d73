#pragma once

#include "afalab/pooling.hpp"
#include "afalab/rng.hpp"

#include <nlohmann/json_fwd.hpp>

#include <array>
#include <cstdint>
#include <filesystem>
#include <utility>
#include <vector>

namespace afalab {

inline constexpr int kTextureCount = 30;
inline constexpr int kDistractorCount = 16;
inline constexpr int kMaxDistractorCells = 6;
inline constexpr double kExpertGain = 2.5;
inline constexpr double kStepScale = 0.05;
// Episode layout mirrors the usual manipulation benchmarks: the agent
// starts near a home pose with a little jitter and the goal is randomized
// inside a bounded region away from the walls.
inline constexpr double kGoalRegion = 0.8;
inline constexpr double kStartRegion = 0.15;

/// Goal for episode draws: demos use a jittered-grid (stratified) sample so
/// a small demo set still covers the goal region; evaluation draws uniform.
std::array<double, 2> sample_goal_stratified(int index, int total, Rng& rng);
std::array<double, 2> sample_goal_uniform(Rng& rng);
std::array<double, 2> sample_start(Rng& rng);

struct WorldState {
    std::array<double, 2> agent{0.0, 0.0};
    std::array<double, 2> goal{0.0, 0.0};
    int t = 0;
};

struct Lighting {
    std::array<double, 3> diffuse{1.0, 1.0, 1.0};
    double specular = 0.0;
    std::array<double, 2> direction{0.0, 0.0};

    bool operator==(const Lighting&) const = default;
};

struct SceneConfig {
    int texture_id = 0;
    Lighting lighting;
    std::vector<std::pair<int, int>> distractors;  // (cell index, distractor id)
    std::uint64_t seed = 0;

    bool operator==(const SceneConfig&) const = default;
    nlohmann::json to_json() const;
    static SceneConfig from_json(const nlohmann::json& j);
};

/// The frozen synthetic encoder: every signature is drawn once from the
/// master seed. Agent/goal/texture signatures are redrawn until all pairwise
/// |cosine| < 0.5; the light-direction signature is projected orthogonal to
/// the agent and goal signatures.
struct SignatureBank {
    int grid = 8;
    int dim = 64;
    Matrix agent_sig;                   // 1 x D, unit norm
    Matrix goal_sig;                    // 1 x D, unit norm
    std::vector<Matrix> texture_sigs;   // 30 unit vectors
    std::vector<Matrix> distractor_sigs;  // 16 unit vectors
    Matrix light_dir_sig;               // 1 x D, unit norm
    Matrix positional;                  // N x D cell codes, affine in the cell coordinates
    std::vector<Matrix> positional_basis;  // orthonormal directions spanning the code subspace

    static SignatureBank create(int grid, int dim, std::uint64_t master_seed);

    /// Positional code of an arbitrary continuous position; row c of
    /// `positional` equals position_code(center of cell c).
    Matrix position_code(std::array<double, 2> pos) const;
};

/// Nonzero bilinear occupancy weights of a continuous position in [-1,1]^2
/// over its (up to 4) nearest cells. Weights are nonnegative and sum to
/// exactly 1.
struct BumpSupport {
    int count = 0;
    std::array<std::pair<int, double>, 4> cells;  // (row-major cell index, weight)

    double weight_at(int cell) const {
        for (int k = 0; k < count; ++k)
            if (cells[k].first == cell) return cells[k].second;
        return 0.0;
    }
};

BumpSupport bilinear_bump(std::array<double, 2> pos, int grid);

TokenGrid render_tokens(const WorldState& state, const SceneConfig& scene, const SignatureBank& bank);

/// Proportional reach toward the goal, clamped to the action box.
std::array<double, 2> expert_action(const WorldState& state);

WorldState step(const WorldState& state, std::array<double, 2> action);

struct DemoStep {
    std::array<double, 2> proprio;  // agent position
    TokenGrid grid;
    std::array<double, 2> action;
    int t = 0;
};

struct Demonstration {
    std::uint64_t seed = 0;
    SceneConfig scene;
    std::array<double, 2> goal{0.0, 0.0};
    double final_distance = 0.0;  // agent-goal distance when the episode ended
    std::vector<DemoStep> steps;
};

struct EnvConfig {
    int grid = 8;
    int dim = 64;
    int horizon = 60;
    double epsilon = 0.05;
    std::uint64_t master_seed = 7;
};

std::vector<Demonstration> generate_demos(const EnvConfig& env, const SignatureBank& bank, int n,
                                          int horizon, std::uint64_t seed);

SceneConfig perturb_lighting(const SceneConfig& scene, std::uint64_t seed);
SceneConfig perturb_texture(const SceneConfig& scene, int grid, std::uint64_t seed);

struct BoolGrid {
    int height = 0;
    int width = 0;
    std::vector<std::uint8_t> cells;

    bool at(int i, int j) const { return cells[static_cast<std::size_t>(i) * width + j] != 0; }
    int count() const;
};

/// True exactly on cells carrying nonzero agent or goal bump weight.
BoolGrid task_mask(const WorldState& state, int grid);

// Demonstration directory format: manifest.json plus per-episode JSON
// metadata and a flat binary token file (little-endian float64 with an
// H/W/D/T header).
void save_demos(const std::filesystem::path& dir, const std::vector<Demonstration>& demos,
                const EnvConfig& env, std::uint64_t demo_seed, const nlohmann::json& config_echo);
std::vector<Demonstration> load_demos(const std::filesystem::path& dir);
nlohmann::json load_demo_manifest(const std::filesystem::path& dir);

}  // namespace afalab

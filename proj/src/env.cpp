#include "afalab/env.hpp"

#include "afalab/errors.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numbers>
#include <stdexcept>

static_assert(std::endian::native == std::endian::little, "token files are little-endian");

namespace afalab {

namespace {

constexpr double kTextureScale = 0.5;
constexpr double kDistractorScale = 1.5;
constexpr double kPositionalNorm = 0.1;
constexpr double kEntityCodeScale = 10.0;
constexpr double kEntitySigScale = 3.0;
constexpr double kDemoJitter = 0.3;  // exploration noise in recorded expert actions  // entity position content vs background cell codes
// bump fractions this close to a cell are snapped onto it, so exact
// cell-center placements stay single-cell despite coordinate rounding
constexpr double kBumpSnap = 1e-6;

Matrix unit_vector(int dim, Rng& rng) {
    Matrix v(1, dim);
    double norm2 = 0.0;
    do {
        norm2 = 0.0;
        for (int d = 0; d < dim; ++d) {
            v[d] = rng.normal();
            norm2 += v[d] * v[d];
        }
    } while (norm2 == 0.0);
    const double inv = 1.0 / std::sqrt(norm2);
    for (int d = 0; d < dim; ++d) v[d] *= inv;
    return v;
}

double cosine(const Matrix& a, const Matrix& b) { return dot(a.data(), b.data()); }

bool separated(const Matrix& candidate, const std::vector<const Matrix*>& others) {
    for (const Matrix* o : others)
        if (std::abs(cosine(candidate, *o)) >= 0.5) return false;
    return true;
}

Matrix draw_separated(int dim, Rng& rng, const std::vector<const Matrix*>& others) {
    while (true) {
        Matrix v = unit_vector(dim, rng);
        if (separated(v, others)) return v;
    }
}

std::array<double, 2> clamp_box(std::array<double, 2> p) {
    return {std::clamp(p[0], -1.0, 1.0), std::clamp(p[1], -1.0, 1.0)};
}

double distance(std::array<double, 2> a, std::array<double, 2> b) {
    return std::hypot(a[0] - b[0], a[1] - b[1]);
}

struct Axis {
    int index;
    double frac;  // in [0, 1); 0 means fully on `index`
};

Axis axis_support(double coord, int grid) {
    // world [-1, 1] to continuous cell index [0, grid-1]
    double u = 0.5 * (coord + 1.0) * (grid - 1);
    u = std::clamp(u, 0.0, static_cast<double>(grid - 1));
    int idx = static_cast<int>(std::floor(u));
    if (idx > grid - 2) idx = grid - 2;
    double frac = u - idx;
    if (frac < kBumpSnap) frac = 0.0;
    if (frac > 1.0 - kBumpSnap) {
        idx += 1;
        frac = 0.0;
    }
    if (idx == grid - 1) frac = 0.0;
    return {idx, frac};
}

void write_u32(std::ofstream& out, std::uint32_t v) { out.write(reinterpret_cast<const char*>(&v), 4); }

std::uint32_t read_u32(std::ifstream& in) {
    std::uint32_t v = 0;
    in.read(reinterpret_cast<char*>(&v), 4);
    return v;
}

}  // namespace

nlohmann::json SceneConfig::to_json() const {
    return nlohmann::json{{"texture_id", texture_id},
                          {"diffuse", lighting.diffuse},
                          {"specular", lighting.specular},
                          {"direction", lighting.direction},
                          {"distractors", distractors},
                          {"seed", seed}};
}

SceneConfig SceneConfig::from_json(const nlohmann::json& j) {
    SceneConfig s;
    s.texture_id = j.at("texture_id").get<int>();
    s.lighting.diffuse = j.at("diffuse").get<std::array<double, 3>>();
    s.lighting.specular = j.at("specular").get<double>();
    s.lighting.direction = j.at("direction").get<std::array<double, 2>>();
    s.distractors = j.at("distractors").get<std::vector<std::pair<int, int>>>();
    s.seed = j.at("seed").get<std::uint64_t>();
    return s;
}

SignatureBank SignatureBank::create(int grid, int dim, std::uint64_t master_seed) {
    Rng rng(mix_seed(master_seed, 0x5147));
    SignatureBank bank;
    bank.grid = grid;
    bank.dim = dim;

    std::vector<const Matrix*> constrained;
    bank.agent_sig = draw_separated(dim, rng, constrained);
    constrained.push_back(&bank.agent_sig);
    bank.goal_sig = draw_separated(dim, rng, constrained);
    constrained.push_back(&bank.goal_sig);
    bank.texture_sigs.reserve(kTextureCount);
    for (int k = 0; k < kTextureCount; ++k) {
        bank.texture_sigs.push_back(draw_separated(dim, rng, constrained));
        constrained.push_back(&bank.texture_sigs.back());
    }
    for (int k = 0; k < kDistractorCount; ++k) bank.distractor_sigs.push_back(unit_vector(dim, rng));

    // orthogonal to agent/goal so specular never masks the task signal;
    // orthonormalize the pair first since the two signatures are not
    // orthogonal to each other
    Matrix goal_orth = bank.goal_sig;
    {
        const double c = cosine(goal_orth, bank.agent_sig);
        for (int d = 0; d < dim; ++d) goal_orth[d] -= c * bank.agent_sig[d];
        const double n = std::sqrt(dot(goal_orth.data(), goal_orth.data()));
        for (int d = 0; d < dim; ++d) goal_orth[d] /= n;
    }
    Matrix ld = unit_vector(dim, rng);
    for (const Matrix* s : {&bank.agent_sig, &goal_orth}) {
        const double c = cosine(ld, *s);
        for (int d = 0; d < dim; ++d) ld[d] -= c * (*s)[d];
    }
    double norm = std::sqrt(dot(ld.data(), ld.data()));
    for (int d = 0; d < dim; ++d) ld[d] /= norm;
    bank.light_dir_sig = std::move(ld);

    // Positional codes vary smoothly (affinely) with the cell coordinates
    // inside a random orthonormal subspace, the way ViT positional
    // embeddings vary smoothly across patches. Smoothness is what lets a
    // policy decode positions at cells no demonstration ever visited;
    // independent random codes would make that a pure lookup.
    std::vector<Matrix> basis;
    for (int k = 0; k < 3 && k < dim; ++k) {
        Matrix v = unit_vector(dim, rng);
        for (const Matrix& prev : basis) {
            const double c = cosine(v, prev);
            for (int d = 0; d < dim; ++d) v[d] -= c * prev[d];
        }
        const double vn = std::sqrt(dot(v.data(), v.data()));
        for (int d = 0; d < dim; ++d) v[d] /= vn;
        basis.push_back(std::move(v));
    }
    bank.positional_basis = std::move(basis);
    const std::vector<double> coords = linspace_coords(grid);
    const int n = grid * grid;
    bank.positional = Matrix(n, dim);
    for (int i = 0; i < grid; ++i)
        for (int j = 0; j < grid; ++j) {
            const Matrix code = bank.position_code({coords[j], coords[i]});
            auto row = bank.positional.row_span(i * grid + j);
            std::copy(code.data().begin(), code.data().end(), row.begin());
        }
    return bank;
}

BumpSupport bilinear_bump(std::array<double, 2> pos, int grid) {
    const Axis ax = axis_support(pos[0], grid);
    const Axis ay = axis_support(pos[1], grid);
    const auto cell = [grid](int iy, int ix) { return iy * grid + ix; };
    BumpSupport s;
    if (ax.frac == 0.0 && ay.frac == 0.0) {
        s.count = 1;
        s.cells[0] = {cell(ay.index, ax.index), 1.0};
    } else if (ay.frac == 0.0) {
        const double w0 = 1.0 - ax.frac;
        s.count = 2;
        s.cells[0] = {cell(ay.index, ax.index), w0};
        s.cells[1] = {cell(ay.index, ax.index + 1), 1.0 - w0};
    } else if (ax.frac == 0.0) {
        const double w0 = 1.0 - ay.frac;
        s.count = 2;
        s.cells[0] = {cell(ay.index, ax.index), w0};
        s.cells[1] = {cell(ay.index + 1, ax.index), 1.0 - w0};
    } else {
        const double w00 = (1.0 - ax.frac) * (1.0 - ay.frac);
        const double w01 = ax.frac * (1.0 - ay.frac);
        const double w10 = (1.0 - ax.frac) * ay.frac;
        s.count = 4;
        s.cells[0] = {cell(ay.index, ax.index), w00};
        s.cells[1] = {cell(ay.index, ax.index + 1), w01};
        s.cells[2] = {cell(ay.index + 1, ax.index), w10};
        s.cells[3] = {cell(ay.index + 1, ax.index + 1), 1.0 - (w00 + w01 + w10)};
    }
    return s;
}

Matrix SignatureBank::position_code(std::array<double, 2> pos) const {
    Matrix code(1, dim);
    const double scale = kPositionalNorm / std::sqrt(3.0);
    const double parts[3] = {pos[0], pos[1], 1.0};
    for (int k = 0; k < static_cast<int>(positional_basis.size()); ++k)
        for (int d = 0; d < dim; ++d) code[d] += scale * parts[k] * positional_basis[k][d];
    return code;
}

TokenGrid render_tokens(const WorldState& state, const SceneConfig& scene, const SignatureBank& bank) {
    const int grid = bank.grid;
    const int dim = bank.dim;
    TokenGrid out(grid, grid, dim);

    const BumpSupport agent_bump = bilinear_bump(state.agent, grid);
    const BumpSupport goal_bump = bilinear_bump(state.goal, grid);
    const std::vector<double> coords = linspace_coords(grid);
    const Lighting& light = scene.lighting;
    const int third = dim / 3;

    std::vector<int> distractor_at(static_cast<std::size_t>(grid) * grid, -1);
    for (const auto& [cell, id] : scene.distractors) distractor_at[cell] = id;

    // An occupied patch does not just carry the entity's signature: its
    // appearance also encodes where inside the patch the entity sits, the
    // way real patch embeddings shift with sub-patch object position. The
    // entity code is the positional code of the entity's exact coordinates;
    // without it, globally pooled features are position-blind (bump weights
    // sum to 1) and no policy can recover the goal.
    const Matrix agent_code = bank.position_code(state.agent);
    const Matrix goal_code = bank.position_code(state.goal);

    for (int i = 0; i < grid; ++i) {
        for (int j = 0; j < grid; ++j) {
            const int cell = i * grid + j;
            auto token = out.token(i, j);
            const double aw = agent_bump.weight_at(cell);
            const double gw = goal_bump.weight_at(cell);

            const Matrix& background =
                distractor_at[cell] >= 0 ? bank.distractor_sigs[distractor_at[cell]] : bank.texture_sigs[scene.texture_id];
            const double bg_scale = distractor_at[cell] >= 0 ? kDistractorScale : kTextureScale;
            // entities occlude the background of the cells they occupy; a
            // covered patch shows no tabletop, which is what makes attended
            // task cells insensitive to texture swaps
            const double visible = std::max(0.0, 1.0 - aw - gw);
            auto pos = bank.positional.row_span(cell);
            for (int d = 0; d < dim; ++d) {
                const double bg = visible * (bg_scale * background[d] + pos[d]);
                const double entity = aw * (kEntitySigScale * bank.agent_sig[d] + kEntityCodeScale * agent_code[d]) +
                                      gw * (kEntitySigScale * bank.goal_sig[d] + kEntityCodeScale * goal_code[d]);
                const double diffuse = light.diffuse[std::min(d / third, 2)];
                // appearance content scales fully with the diffuse light;
                // entity content only partially, the way semantic features
                // of a frozen encoder are steadier under relighting than
                // raw appearance
                token[d] = diffuse * bg + (0.5 + 0.5 * diffuse) * entity;
            }
            if (light.specular != 0.0) {
                const double facing = std::max(0.0, coords[j] * light.direction[0] + coords[i] * light.direction[1]);
                if (facing > 0.0) {
                    const double spec = light.specular * facing;
                    for (int d = 0; d < dim; ++d) token[d] += spec * bank.light_dir_sig[d];
                }
            }
        }
    }
    return out;
}

std::array<double, 2> expert_action(const WorldState& state) {
    return clamp_box({kExpertGain * (state.goal[0] - state.agent[0]), kExpertGain * (state.goal[1] - state.agent[1])});
}

WorldState step(const WorldState& state, std::array<double, 2> action) {
    WorldState next = state;
    next.agent = clamp_box({state.agent[0] + kStepScale * action[0], state.agent[1] + kStepScale * action[1]});
    next.t = state.t + 1;
    return next;
}

std::array<double, 2> sample_goal_uniform(Rng& rng) {
    return {rng.uniform(-kGoalRegion, kGoalRegion), rng.uniform(-kGoalRegion, kGoalRegion)};
}

std::array<double, 2> sample_start(Rng& rng) {
    return {rng.uniform(-kStartRegion, kStartRegion), rng.uniform(-kStartRegion, kStartRegion)};
}

std::array<double, 2> sample_goal_stratified(int index, int total, Rng& rng) {
    const int side = static_cast<int>(std::ceil(std::sqrt(static_cast<double>(total))));
    const double cell = 2.0 * kGoalRegion / side;
    const int gx = index % side;
    const int gy = (index / side) % side;
    return {-kGoalRegion + (gx + rng.uniform01()) * cell, -kGoalRegion + (gy + rng.uniform01()) * cell};
}

std::vector<Demonstration> generate_demos(const EnvConfig& env, const SignatureBank& bank, int n,
                                          int horizon, std::uint64_t seed) {
    if (n < 1) throw std::invalid_argument("generate_demos: n must be >= 1");
    std::vector<Demonstration> demos;
    demos.reserve(n);
    for (int e = 0; e < n; ++e) {
        const std::uint64_t ep_seed = mix_seed(seed, static_cast<std::uint64_t>(e));
        Rng rng(ep_seed);
        Demonstration demo;
        demo.seed = ep_seed;
        demo.scene.seed = ep_seed;  // in-domain scene otherwise

        WorldState state;
        do {
            state.agent = sample_start(rng);
            state.goal = sample_goal_stratified(e, n, rng);
        } while (distance(state.agent, state.goal) <= 2.0 * env.epsilon);
        state.t = 0;
        demo.goal = state.goal;

        while (state.t < horizon) {
            DemoStep ds;
            ds.proprio = state.agent;
            ds.grid = render_tokens(state, demo.scene, bank);
            ds.action = expert_action(state);
            ds.t = state.t;
            demo.steps.push_back(std::move(ds));
            // execute with exploration jitter but record the clean expert
            // action: rollouts then cover a tube of states around the
            // nominal path while the labels stay noise-free, which is what
            // teaches the cloned policy to correct its own drift
            const std::array<double, 2> executed =
                clamp_box({ds.action[0] + kDemoJitter * rng.normal(), ds.action[1] + kDemoJitter * rng.normal()});
            state = step(state, executed);
            if (distance(state.agent, state.goal) <= env.epsilon) break;
        }
        demo.final_distance = distance(state.agent, state.goal);
        demos.push_back(std::move(demo));
    }
    return demos;
}

SceneConfig perturb_lighting(const SceneConfig& scene, std::uint64_t seed) {
    Rng rng(mix_seed(seed, 0x11647));
    SceneConfig out = scene;
    out.seed = seed;
    for (int c = 0; c < 3; ++c) out.lighting.diffuse[c] = rng.uniform(0.3, 1.0);
    out.lighting.specular = rng.uniform(0.1, 0.5);
    out.lighting.direction = {rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0)};
    return out;
}

SceneConfig perturb_texture(const SceneConfig& scene, int grid, std::uint64_t seed) {
    Rng rng(mix_seed(seed, 0x7e87));
    SceneConfig out = scene;
    out.seed = seed;
    out.texture_id = static_cast<int>(rng.uniform_int(1, kTextureCount - 1));
    const int count = static_cast<int>(rng.uniform_int(0, kMaxDistractorCells));
    out.distractors.clear();
    const int n = grid * grid;
    while (static_cast<int>(out.distractors.size()) < count) {
        const int cell = static_cast<int>(rng.uniform_int(0, n - 1));
        const int id = static_cast<int>(rng.uniform_int(0, kDistractorCount - 1));
        bool taken = false;
        for (const auto& [c, _] : out.distractors) taken = taken || c == cell;
        if (!taken) out.distractors.emplace_back(cell, id);
    }
    return out;
}

int BoolGrid::count() const {
    int c = 0;
    for (std::uint8_t v : cells) c += v != 0;
    return c;
}

BoolGrid task_mask(const WorldState& state, int grid) {
    BoolGrid mask;
    mask.height = grid;
    mask.width = grid;
    mask.cells.assign(static_cast<std::size_t>(grid) * grid, 0);
    for (const BumpSupport& bump : {bilinear_bump(state.agent, grid), bilinear_bump(state.goal, grid)})
        for (int k = 0; k < bump.count; ++k)
            if (bump.cells[k].second > 0.0) mask.cells[bump.cells[k].first] = 1;
    return mask;
}

void save_demos(const std::filesystem::path& dir, const std::vector<Demonstration>& demos,
                const EnvConfig& env, std::uint64_t demo_seed, const nlohmann::json& config_echo) {
    std::filesystem::create_directories(dir);
    nlohmann::json manifest{{"format_version", 1},
                            {"master_seed", env.master_seed},
                            {"demo_seed", demo_seed},
                            {"grid", env.grid},
                            {"dim", env.dim},
                            {"epsilon", env.epsilon},
                            {"config", config_echo},
                            {"episodes", nlohmann::json::array()}};
    char name[64];
    for (std::size_t e = 0; e < demos.size(); ++e) {
        const Demonstration& demo = demos[e];
        std::snprintf(name, sizeof(name), "episode_%04zu", e);
        const std::string meta_name = std::string(name) + ".json";
        const std::string token_name = std::string(name) + ".tokens";

        nlohmann::json steps = nlohmann::json::array();
        for (const DemoStep& s : demo.steps)
            steps.push_back({{"t", s.t}, {"proprio", s.proprio}, {"action", s.action}});
        nlohmann::json meta{{"seed", demo.seed},
                            {"scene", demo.scene.to_json()},
                            {"goal", demo.goal},
                            {"final_distance", demo.final_distance},
                            {"steps", steps}};
        std::ofstream mf(dir / meta_name, std::ios::binary);
        mf << meta.dump(2) << "\n";

        std::ofstream tf(dir / token_name, std::ios::binary);
        tf.write("AFTK", 4);
        write_u32(tf, 1);  // version
        const int h = demo.steps.empty() ? env.grid : demo.steps[0].grid.height;
        const int w = demo.steps.empty() ? env.grid : demo.steps[0].grid.width;
        const int d = demo.steps.empty() ? env.dim : demo.steps[0].grid.dim;
        write_u32(tf, static_cast<std::uint32_t>(h));
        write_u32(tf, static_cast<std::uint32_t>(w));
        write_u32(tf, static_cast<std::uint32_t>(d));
        write_u32(tf, static_cast<std::uint32_t>(demo.steps.size()));
        for (const DemoStep& s : demo.steps) {
            const auto data = s.grid.tokens.data();
            tf.write(reinterpret_cast<const char*>(data.data()), static_cast<std::streamsize>(data.size() * sizeof(double)));
        }
        manifest["episodes"].push_back(
            {{"meta", meta_name}, {"tokens", token_name}, {"steps", demo.steps.size()}, {"seed", demo.seed}});
    }
    manifest["count"] = demos.size();
    std::ofstream out(dir / "manifest.json", std::ios::binary);
    out << manifest.dump(2) << "\n";
}

nlohmann::json load_demo_manifest(const std::filesystem::path& dir) {
    const std::filesystem::path path = dir / "manifest.json";
    std::ifstream in(path);
    if (!in) throw DataError("demo manifest not found: " + path.string());
    nlohmann::json manifest;
    try {
        manifest = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw DataError("corrupt demo manifest " + path.string() + ": " + e.what());
    }
    return manifest;
}

std::vector<Demonstration> load_demos(const std::filesystem::path& dir) {
    const nlohmann::json manifest = load_demo_manifest(dir);
    std::vector<Demonstration> demos;
    for (const auto& entry : manifest.at("episodes")) {
        const std::filesystem::path meta_path = dir / entry.at("meta").get<std::string>();
        const std::filesystem::path token_path = dir / entry.at("tokens").get<std::string>();
        std::ifstream mf(meta_path);
        if (!mf) throw DataError("demo episode missing: " + meta_path.string());
        nlohmann::json meta;
        try {
            meta = nlohmann::json::parse(mf);
        } catch (const nlohmann::json::exception& e) {
            throw DataError("corrupt demo file " + meta_path.string() + ": " + e.what());
        }

        Demonstration demo;
        demo.seed = meta.at("seed").get<std::uint64_t>();
        demo.scene = SceneConfig::from_json(meta.at("scene"));
        demo.goal = meta.at("goal").get<std::array<double, 2>>();
        demo.final_distance = meta.at("final_distance").get<double>();

        std::ifstream tf(token_path, std::ios::binary);
        if (!tf) throw DataError("demo token file missing: " + token_path.string());
        char magic[4];
        tf.read(magic, 4);
        if (std::memcmp(magic, "AFTK", 4) != 0)
            throw DataError("corrupt demo token file (bad magic): " + token_path.string());
        const std::uint32_t version = read_u32(tf);
        if (version != 1)
            throw DataError("unsupported token file version " + std::to_string(version) + ": " + token_path.string());
        const int h = static_cast<int>(read_u32(tf));
        const int w = static_cast<int>(read_u32(tf));
        const int d = static_cast<int>(read_u32(tf));
        const int steps = static_cast<int>(read_u32(tf));
        const auto& meta_steps = meta.at("steps");
        if (static_cast<int>(meta_steps.size()) != steps)
            throw DataError("corrupt demo episode (step count mismatch): " + meta_path.string());

        for (int k = 0; k < steps; ++k) {
            DemoStep ds;
            ds.t = meta_steps[k].at("t").get<int>();
            ds.proprio = meta_steps[k].at("proprio").get<std::array<double, 2>>();
            ds.action = meta_steps[k].at("action").get<std::array<double, 2>>();
            ds.grid = TokenGrid(h, w, d);
            auto data = ds.grid.tokens.data();
            tf.read(reinterpret_cast<char*>(data.data()), static_cast<std::streamsize>(data.size() * sizeof(double)));
            if (!tf) throw DataError("corrupt demo token file (truncated): " + token_path.string());
            demo.steps.push_back(std::move(ds));
        }
        demos.push_back(std::move(demo));
    }
    return demos;
}

}  // namespace afalab

#ifndef HF_SYNTH_HPP
#define HF_SYNTH_HPP

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "hf/rng.hpp"

namespace hf::synth {

// 16 joints: wrist, then (base, mid, tip) per finger, thumb first.
inline constexpr int kJoints = 16;
inline constexpr int kImageSize = 64;
inline constexpr double kHeatmapSigma = 2.0;
// Joints are sampled at least this far from the border so heatmap support
// stays inside the frame.
inline constexpr double kJointMargin = 7.0;

struct PoseParams {
    double root_x = 32, root_y = 40;  // wrist, px
    double rotation = -1.5707963267948966;  // hand axis; -pi/2 points fingers up
    double scale = 10;                // palm scale, px
    double spread = 0.2;              // angular step between adjacent fingers
    std::array<double, 5> bend_base{};  // per finger, radians
    std::array<double, 5> bend_mid{};

    bool operator==(const PoseParams&) const = default;
};

struct AppearanceParams {
    std::uint64_t background_seed = 0;
    double background_mean = 0.5;      // [0.1, 0.9]
    double background_contrast = 0.3;  // [0.1, 0.7]
    double light_theta = 0;            // radians
    double light_contrast = 0;         // [0, 0.8]
    double albedo = 0.8;               // [0.2, 0.95]
    double stroke = 2.0;               // finger stroke thickness, px
    int blur = 0;                      // box blur radius, {0,1,2}

    bool operator==(const AppearanceParams&) const = default;
};

using Joints = std::array<std::array<double, 2>, kJoints>;

struct Image {
    int width = kImageSize;
    int height = kImageSize;
    std::vector<float> pixels;  // row-major, [0,1]
};

struct HeatmapSpec {
    int k = kJoints;
    int height = kImageSize;
    int width = kImageSize;
    double sigma = kHeatmapSigma;
};

struct SampleRecord {
    std::string image;  // file name relative to the dataset dir
    Joints joints{};
    PoseParams pose;
    AppearanceParams appearance;
    std::optional<std::int64_t> pair_id;
};

struct Dataset {
    int k = kJoints;
    int width = kImageSize;
    int height = kImageSize;
    double sigma = kHeatmapSigma;
    std::vector<SampleRecord> records;
    std::vector<std::vector<float>> images;  // decoded to [0,1], aligned with records
};

// Sampling is uniform within the documented ranges and deterministic given
// the rng state. Pose draws are rejected until every joint clears the margin.
PoseParams sample_pose(Rng& rng);
AppearanceParams sample_appearance(Rng& rng);

// Closed-form forward kinematics of the wrist + 5x(base,mid,tip) chain.
Joints forward_kinematics(const PoseParams& pose);

// Renders the capsule hand over value-noise background with directional
// shading. Throws if any joint falls outside the frame.
void render(const PoseParams& pose, const AppearanceParams& app, Image& image, Joints& joints);

// P_k(u,v) = exp(-((u-x_k)^2 + (v-y_k)^2) / (2 sigma^2)); out is [K][H][W].
void render_heatmaps(const Joints& joints, const HeatmapSpec& spec, float* out);
std::vector<float> render_heatmaps(const Joints& joints, const HeatmapSpec& spec);

// Writes `count` records (2x images when paired) plus manifest.json.
// Bitwise deterministic in (count, seed, paired).
void generate_dataset(int count, std::uint64_t seed, bool paired,
                      const std::filesystem::path& out_dir);

Dataset load_dataset(const std::filesystem::path& dir);

// Pure per-record parameter derivation, exposed for property tests.
PoseParams record_pose(std::uint64_t seed, int index);
AppearanceParams record_appearance(std::uint64_t seed, int index, int variant);

void write_pgm(const std::filesystem::path& path, const Image& image);
Image read_pgm(const std::filesystem::path& path);

}  // namespace hf::synth

#endif  // HF_SYNTH_HPP

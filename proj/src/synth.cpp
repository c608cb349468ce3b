#include "hf/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <stdexcept>

#include "json.hpp"

namespace hf::synth {

namespace {

using json = nlohmann::json;

// Per-finger proportions relative to palm scale (thumb first).
constexpr std::array<double, 5> kKnuckleDist = {0.50, 0.80, 0.84, 0.78, 0.68};
constexpr std::array<double, 5> kProximalLen = {0.46, 0.62, 0.70, 0.64, 0.50};
constexpr std::array<double, 5> kDistalLen = {0.34, 0.42, 0.46, 0.42, 0.34};
constexpr double kThumbOffset = -0.58;  // extra fan angle for the thumb

struct Vec2 {
    double x, y;
};

Vec2 dir(double angle) { return {std::cos(angle), std::sin(angle)}; }

double dist_to_segment(double px, double py, Vec2 a, Vec2 b) {
    const double dx = b.x - a.x, dy = b.y - a.y;
    const double len2 = dx * dx + dy * dy;
    double t = len2 > 0 ? ((px - a.x) * dx + (py - a.y) * dy) / len2 : 0.0;
    t = std::clamp(t, 0.0, 1.0);
    const double cx = a.x + t * dx, cy = a.y + t * dy;
    return std::hypot(px - cx, py - cy);
}

struct Capsule {
    Vec2 a, b;
    double radius;
};

bool joints_in_frame(const Joints& joints, double margin) {
    for (const auto& j : joints)
        if (j[0] < margin || j[0] > kImageSize - 1 - margin || j[1] < margin ||
            j[1] > kImageSize - 1 - margin)
            return false;
    return true;
}

std::vector<Capsule> hand_capsules(const PoseParams& pose, const AppearanceParams& app,
                                   const Joints& joints) {
    std::vector<Capsule> caps;
    const Vec2 wrist{pose.root_x, pose.root_y};
    const Vec2 axis = dir(pose.rotation);
    // Palm: thick capsule from the wrist toward the knuckle arc.
    caps.push_back({wrist,
                    {wrist.x + 0.72 * pose.scale * axis.x, wrist.y + 0.72 * pose.scale * axis.y},
                    0.40 * pose.scale + 0.25 * app.stroke});
    // Arm stub below the wrist; it carries no keypoint on purpose.
    caps.push_back({wrist,
                    {wrist.x - 30.0 * axis.x, wrist.y - 30.0 * axis.y},
                    0.30 * pose.scale + 0.25 * app.stroke});
    for (int f = 0; f < 5; ++f) {
        const auto& base = joints[1 + 3 * f];
        const auto& mid = joints[2 + 3 * f];
        const auto& tip = joints[3 + 3 * f];
        caps.push_back({{base[0], base[1]}, {mid[0], mid[1]}, app.stroke});
        caps.push_back({{mid[0], mid[1]}, {tip[0], tip[1]}, 0.85 * app.stroke});
    }
    return caps;
}

// Bilinearly interpolated random lattice (cell size 8 px).
struct ValueNoise {
    static constexpr int kCell = 8;
    static constexpr int kGrid = kImageSize / kCell + 1;
    std::array<double, kGrid * kGrid> lattice;

    explicit ValueNoise(std::uint64_t seed) {
        Rng rng(seed, 7);
        for (auto& v : lattice) v = rng.uniform();
    }

    double at(double u, double v) const {
        const double gu = u / kCell, gv = v / kCell;
        const int iu = std::min(static_cast<int>(gu), kGrid - 2);
        const int iv = std::min(static_cast<int>(gv), kGrid - 2);
        const double fu = gu - iu, fv = gv - iv;
        const double a = lattice[iv * kGrid + iu], b = lattice[iv * kGrid + iu + 1];
        const double c = lattice[(iv + 1) * kGrid + iu], d = lattice[(iv + 1) * kGrid + iu + 1];
        return (a * (1 - fu) + b * fu) * (1 - fv) + (c * (1 - fu) + d * fu) * fv;
    }
};

void box_blur(std::vector<float>& img, int w, int h, int radius) {
    if (radius <= 0) return;
    std::vector<float> tmp(img.size());
    const int win = 2 * radius + 1;
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            double s = 0;
            for (int k = -radius; k <= radius; ++k)
                s += img[y * w + std::clamp(x + k, 0, w - 1)];
            tmp[y * w + x] = static_cast<float>(s / win);
        }
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            double s = 0;
            for (int k = -radius; k <= radius; ++k)
                s += tmp[std::clamp(y + k, 0, h - 1) * w + x];
            img[y * w + x] = static_cast<float>(s / win);
        }
}

json pose_to_json(const PoseParams& p) {
    return json{{"root", {p.root_x, p.root_y}}, {"rotation", p.rotation},
                {"scale", p.scale},             {"spread", p.spread},
                {"bend_base", p.bend_base},     {"bend_mid", p.bend_mid}};
}

PoseParams pose_from_json(const json& j) {
    PoseParams p;
    p.root_x = j.at("root").at(0).get<double>();
    p.root_y = j.at("root").at(1).get<double>();
    p.rotation = j.at("rotation").get<double>();
    p.scale = j.at("scale").get<double>();
    p.spread = j.at("spread").get<double>();
    for (int i = 0; i < 5; ++i) {
        p.bend_base[i] = j.at("bend_base").at(i).get<double>();
        p.bend_mid[i] = j.at("bend_mid").at(i).get<double>();
    }
    return p;
}

json appearance_to_json(const AppearanceParams& a) {
    return json{{"background_seed", a.background_seed},
                {"background_mean", a.background_mean},
                {"background_contrast", a.background_contrast},
                {"light_theta", a.light_theta},
                {"light_contrast", a.light_contrast},
                {"albedo", a.albedo},
                {"stroke", a.stroke},
                {"blur", a.blur}};
}

AppearanceParams appearance_from_json(const json& j) {
    AppearanceParams a;
    a.background_seed = j.at("background_seed").get<std::uint64_t>();
    a.background_mean = j.at("background_mean").get<double>();
    a.background_contrast = j.at("background_contrast").get<double>();
    a.light_theta = j.at("light_theta").get<double>();
    a.light_contrast = j.at("light_contrast").get<double>();
    a.albedo = j.at("albedo").get<double>();
    a.stroke = j.at("stroke").get<double>();
    a.blur = j.at("blur").get<int>();
    return a;
}

}  // namespace

Joints forward_kinematics(const PoseParams& pose) {
    Joints joints{};
    joints[0] = {pose.root_x, pose.root_y};
    for (int f = 0; f < 5; ++f) {
        const double fan = (f - 2) * pose.spread + (f == 0 ? kThumbOffset : 0.0);
        const double base_angle = pose.rotation + fan;
        const Vec2 kdir = dir(base_angle);
        const double bx = pose.root_x + kKnuckleDist[f] * pose.scale * kdir.x;
        const double by = pose.root_y + kKnuckleDist[f] * pose.scale * kdir.y;
        const double a1 = base_angle + pose.bend_base[f];
        const Vec2 d1 = dir(a1);
        const double mx = bx + kProximalLen[f] * pose.scale * d1.x;
        const double my = by + kProximalLen[f] * pose.scale * d1.y;
        const Vec2 d2 = dir(a1 + pose.bend_mid[f]);
        const double tx = mx + kDistalLen[f] * pose.scale * d2.x;
        const double ty = my + kDistalLen[f] * pose.scale * d2.y;
        joints[1 + 3 * f] = {bx, by};
        joints[2 + 3 * f] = {mx, my};
        joints[3 + 3 * f] = {tx, ty};
    }
    return joints;
}

PoseParams sample_pose(Rng& rng) {
    for (int attempt = 0; attempt < 1000; ++attempt) {
        PoseParams p;
        p.root_x = rng.uniform(24.0, 40.0);
        p.root_y = rng.uniform(34.0, 46.0);
        p.rotation = rng.uniform(-1.5707963267948966 - 0.7, -1.5707963267948966 + 0.7);
        p.scale = rng.uniform(8.0, 12.5);
        p.spread = rng.uniform(0.12, 0.30);
        for (int f = 0; f < 5; ++f) p.bend_base[f] = rng.uniform(-0.35, 0.55);
        for (int f = 0; f < 5; ++f) p.bend_mid[f] = rng.uniform(0.0, 0.9);
        if (joints_in_frame(forward_kinematics(p), kJointMargin)) return p;
    }
    throw std::runtime_error("sample_pose: no in-frame pose found in 1000 draws");
}

AppearanceParams sample_appearance(Rng& rng) {
    AppearanceParams a;
    a.background_seed = rng.next_u64() & 0xffffffffULL;
    a.background_mean = rng.uniform(0.1, 0.9);
    a.background_contrast = rng.uniform(0.1, 0.7);
    a.light_theta = rng.uniform(0.0, 6.283185307179586);
    a.light_contrast = rng.uniform(0.0, 0.8);
    // Keep the hand distinguishable from the mean background level.
    do {
        a.albedo = rng.uniform(0.2, 0.95);
    } while (std::abs(a.albedo - a.background_mean) < 0.15);
    a.stroke = rng.uniform(1.4, 2.8);
    a.blur = static_cast<int>(rng.uniform_int(3));
    return a;
}

void render(const PoseParams& pose, const AppearanceParams& app, Image& image, Joints& joints) {
    joints = forward_kinematics(pose);
    if (!joints_in_frame(joints, 0.0))
        throw std::invalid_argument("render: joints out of the 64x64 frame");

    const int W = kImageSize, H = kImageSize;
    image.width = W;
    image.height = H;
    image.pixels.assign(static_cast<std::size_t>(W) * H, 0.f);

    const ValueNoise noise(app.background_seed);
    const auto caps = hand_capsules(pose, app, joints);
    const double diag = std::sqrt(static_cast<double>(W) * W + static_cast<double>(H) * H);
    const double ct = std::cos(app.light_theta), st = std::sin(app.light_theta);

    for (int v = 0; v < H; ++v) {
        for (int u = 0; u < W; ++u) {
            const double bg = std::clamp(
                app.background_mean + app.background_contrast * (noise.at(u, v) - 0.5), 0.0, 1.0);
            double d = 1e9;
            for (const auto& c : caps)
                d = std::min(d, dist_to_segment(u, v, c.a, c.b) - c.radius);
            const double alpha = std::clamp(0.5 - d, 0.0, 1.0);  // 1 px anti-aliased edge
            double val = bg * (1.0 - alpha) + app.albedo * alpha;
            const double shade = 1.0 + app.light_contrast * ((u * ct + v * st) / diag - 0.5);
            val = std::clamp(val * shade, 0.0, 1.0);
            image.pixels[v * W + u] = static_cast<float>(val);
        }
    }
    box_blur(image.pixels, W, H, app.blur);
}

void render_heatmaps(const Joints& joints, const HeatmapSpec& spec, float* out) {
    const int H = spec.height, W = spec.width;
    const double inv = 1.0 / (2.0 * spec.sigma * spec.sigma);
    std::vector<double> rx(W), ry(H);
    for (int k = 0; k < spec.k; ++k) {
        const double x = joints[k][0], y = joints[k][1];
        for (int u = 0; u < W; ++u) rx[u] = std::exp(-(u - x) * (u - x) * inv);
        for (int v = 0; v < H; ++v) ry[v] = std::exp(-(v - y) * (v - y) * inv);
        float* plane = out + static_cast<std::size_t>(k) * H * W;
        for (int v = 0; v < H; ++v)
            for (int u = 0; u < W; ++u)
                plane[v * W + u] = static_cast<float>(ry[v] * rx[u]);
    }
}

std::vector<float> render_heatmaps(const Joints& joints, const HeatmapSpec& spec) {
    std::vector<float> out(static_cast<std::size_t>(spec.k) * spec.height * spec.width);
    render_heatmaps(joints, spec, out.data());
    return out;
}

PoseParams record_pose(std::uint64_t seed, int index) {
    Rng rng(seed, 4 * static_cast<std::uint64_t>(index));
    return sample_pose(rng);
}

AppearanceParams record_appearance(std::uint64_t seed, int index, int variant) {
    Rng rng(seed, 4 * static_cast<std::uint64_t>(index) + 1 + static_cast<std::uint64_t>(variant));
    return sample_appearance(rng);
}

void write_pgm(const std::filesystem::path& path, const Image& image) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("write_pgm: cannot open " + path.string());
    out << "P5\n" << image.width << " " << image.height << "\n255\n";
    std::vector<unsigned char> bytes(image.pixels.size());
    for (std::size_t i = 0; i < image.pixels.size(); ++i) {
        const double q = std::lround(std::clamp(static_cast<double>(image.pixels[i]), 0.0, 1.0) * 255.0);
        bytes[i] = static_cast<unsigned char>(q);
    }
    out.write(reinterpret_cast<const char*>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
    if (!out) throw std::runtime_error("write_pgm: write failed for " + path.string());
}

Image read_pgm(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("read_pgm: cannot open " + path.string());
    std::string magic;
    in >> magic;
    if (magic != "P5") throw std::runtime_error("read_pgm: " + path.string() + " is not binary PGM");
    int w = 0, h = 0, maxval = 0;
    in >> w >> h >> maxval;
    if (!in || w <= 0 || h <= 0 || maxval != 255)
        throw std::runtime_error("read_pgm: bad header in " + path.string());
    in.get();  // single whitespace after maxval
    std::vector<unsigned char> bytes(static_cast<std::size_t>(w) * h);
    in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!in) throw std::runtime_error("read_pgm: truncated pixel data in " + path.string());
    Image img;
    img.width = w;
    img.height = h;
    img.pixels.resize(bytes.size());
    for (std::size_t i = 0; i < bytes.size(); ++i) img.pixels[i] = bytes[i] / 255.0f;
    return img;
}

void generate_dataset(int count, std::uint64_t seed, bool paired,
                      const std::filesystem::path& out_dir) {
    std::error_code ec;
    std::filesystem::create_directories(out_dir, ec);
    if (ec)
        throw std::runtime_error("generate_dataset: cannot create " + out_dir.string() + ": " +
                                 ec.message());
    json records = json::array();
    char name[64];
    for (int i = 0; i < count; ++i) {
        const PoseParams pose = record_pose(seed, i);
        const int variants = paired ? 2 : 1;
        for (int v = 0; v < variants; ++v) {
            const AppearanceParams app = record_appearance(seed, i, v);
            Image img;
            Joints joints;
            render(pose, app, img, joints);
            if (paired)
                std::snprintf(name, sizeof(name), "img_%06d_%c.pgm", i, 'a' + v);
            else
                std::snprintf(name, sizeof(name), "img_%06d.pgm", i);
            write_pgm(out_dir / name, img);
            json rec;
            rec["image"] = name;
            json js = json::array();
            for (const auto& j : joints) js.push_back({j[0], j[1]});
            rec["joints"] = js;
            rec["pose"] = pose_to_json(pose);
            rec["appearance"] = appearance_to_json(app);
            if (paired) rec["pair_id"] = i;
            records.push_back(std::move(rec));
        }
    }
    json manifest{{"version", 1},        {"k", kJoints},           {"width", kImageSize},
                  {"height", kImageSize}, {"sigma", kHeatmapSigma}, {"records", std::move(records)}};
    std::ofstream out(out_dir / "manifest.json", std::ios::binary);
    if (!out)
        throw std::runtime_error("generate_dataset: cannot write " +
                                 (out_dir / "manifest.json").string());
    out << manifest.dump(1, '\t') << "\n";
    if (!out)
        throw std::runtime_error("generate_dataset: write failed for " +
                                 (out_dir / "manifest.json").string());
}

Dataset load_dataset(const std::filesystem::path& dir) {
    const auto manifest_path = dir / "manifest.json";
    std::ifstream in(manifest_path, std::ios::binary);
    if (!in) throw std::runtime_error("load_dataset: cannot open " + manifest_path.string());
    json manifest;
    try {
        in >> manifest;
    } catch (const json::exception& e) {
        throw std::runtime_error("load_dataset: bad manifest " + manifest_path.string() + ": " +
                                 e.what());
    }
    Dataset ds;
    ds.k = manifest.at("k").get<int>();
    ds.width = manifest.at("width").get<int>();
    ds.height = manifest.at("height").get<int>();
    ds.sigma = manifest.at("sigma").get<double>();
    if (ds.k != kJoints)
        throw std::runtime_error("load_dataset: manifest k=" + std::to_string(ds.k) +
                                 " but this build uses k=" + std::to_string(kJoints));
    for (const auto& rec : manifest.at("records")) {
        SampleRecord r;
        r.image = rec.at("image").get<std::string>();
        const auto& js = rec.at("joints");
        if (static_cast<int>(js.size()) != ds.k)
            throw std::runtime_error("load_dataset: record '" + r.image + "' has " +
                                     std::to_string(js.size()) + " joints, expected " +
                                     std::to_string(ds.k));
        for (int j = 0; j < ds.k; ++j) {
            r.joints[j][0] = js.at(j).at(0).get<double>();
            r.joints[j][1] = js.at(j).at(1).get<double>();
        }
        r.pose = pose_from_json(rec.at("pose"));
        r.appearance = appearance_from_json(rec.at("appearance"));
        if (rec.contains("pair_id")) r.pair_id = rec.at("pair_id").get<std::int64_t>();
        Image img;
        try {
            img = read_pgm(dir / r.image);
        } catch (const std::exception& e) {
            throw std::runtime_error("load_dataset: record '" + r.image + "': " + e.what());
        }
        if (img.width != ds.width || img.height != ds.height)
            throw std::runtime_error("load_dataset: record '" + r.image + "' is " +
                                     std::to_string(img.width) + "x" + std::to_string(img.height) +
                                     ", expected " + std::to_string(ds.width) + "x" +
                                     std::to_string(ds.height));
        ds.images.push_back(std::move(img.pixels));
        ds.records.push_back(std::move(r));
    }
    return ds;
}

}  // namespace hf::synth

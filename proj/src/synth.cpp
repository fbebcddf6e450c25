#include "qdistill/synth.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>

#include "qdistill/data.hpp"
#include "qdistill/rng.hpp"

namespace qdistill::synth {

namespace {

constexpr int kSide = 28;
// bump when the renderer changes so cached IDX fixtures are regenerated
constexpr int kRendererVersion = 3;

struct Point {
    double x, y;
};

using Stroke = std::vector<Point>;

// Stroke templates in a unit box, y growing downward.
std::vector<Stroke> glyph_strokes(int digit) {
    auto ring = [](double cx, double cy, double rx, double ry) {
        Stroke s;
        constexpr int kSegments = 14;
        for (int i = 0; i <= kSegments; ++i) {
            const double a = 2.0 * 3.14159265358979323846 * i / kSegments;
            s.push_back({cx + rx * std::cos(a), cy + ry * std::sin(a)});
        }
        return s;
    };
    switch (digit) {
    case 0:
        return {ring(0.5, 0.5, 0.30, 0.40)};
    case 1:
        return {{{0.38, 0.26}, {0.56, 0.08}, {0.56, 0.92}}};
    case 2:
        return {{{0.22, 0.28}, {0.30, 0.12}, {0.52, 0.08}, {0.74, 0.17},
                 {0.77, 0.36}, {0.58, 0.55}, {0.34, 0.72}, {0.22, 0.90}},
                {{0.22, 0.90}, {0.80, 0.90}}};
    case 3:
        return {{{0.24, 0.13}, {0.50, 0.08}, {0.74, 0.19}, {0.71, 0.38}, {0.48, 0.47}},
                {{0.48, 0.47}, {0.76, 0.58}, {0.74, 0.81}, {0.50, 0.92}, {0.24, 0.84}}};
    case 4:
        return {{{0.62, 0.08}, {0.20, 0.62}, {0.82, 0.62}},
                {{0.62, 0.08}, {0.62, 0.92}}};
    case 5:
        return {{{0.76, 0.10}, {0.26, 0.10}, {0.26, 0.46}},
                {{0.26, 0.46}, {0.56, 0.42}, {0.76, 0.56}, {0.72, 0.79},
                 {0.48, 0.90}, {0.24, 0.82}}};
    case 6:
        return {{{0.70, 0.10}, {0.45, 0.16}, {0.29, 0.40}, {0.26, 0.66}},
                ring(0.48, 0.68, 0.22, 0.22)};
    case 7:
        return {{{0.20, 0.10}, {0.80, 0.10}, {0.44, 0.92}}};
    case 8:
        return {ring(0.50, 0.30, 0.20, 0.20), ring(0.50, 0.71, 0.24, 0.21)};
    case 9:
        return {ring(0.51, 0.32, 0.22, 0.22),
                {{0.73, 0.36}, {0.70, 0.64}, {0.58, 0.92}}};
    default:
        return {};
    }
}

double segment_distance(const Point& p, const Point& a, const Point& b) {
    const double dx = b.x - a.x, dy = b.y - a.y;
    const double len2 = dx * dx + dy * dy;
    double t = 0.0;
    if (len2 > 0.0) t = ((p.x - a.x) * dx + (p.y - a.y) * dy) / len2;
    t = std::clamp(t, 0.0, 1.0);
    const double px = a.x + t * dx - p.x;
    const double py = a.y + t * dy - p.y;
    return std::sqrt(px * px + py * py);
}

std::vector<std::uint8_t> render_one(int digit, Rng& rng) {
    // random affine around the glyph center
    const double angle = rng.uniform(-0.22, 0.22);
    const double scale_x = rng.uniform(0.85, 1.15);
    const double scale_y = rng.uniform(0.85, 1.15);
    const double shear = rng.uniform(-0.18, 0.18);
    const double shift_x = rng.uniform(-2.2, 2.2);
    const double shift_y = rng.uniform(-2.2, 2.2);
    const double radius = rng.uniform(0.9, 1.55);
    const double ca = std::cos(angle), sa = std::sin(angle);

    auto map = [&](const Point& p) {
        // unit box -> 20px box centred in a 28px canvas, with point-level
        // wobble so the glyph shape itself varies between samples
        double x = (p.x - 0.5) * 20.0 * scale_x;
        double y = (p.y - 0.5) * 20.0 * scale_y;
        x += shear * y;
        const double rx = ca * x - sa * y;
        const double ry = sa * x + ca * y;
        return Point{rx + 14.0 + shift_x, ry + 14.0 + shift_y};
    };

    std::vector<Stroke> strokes;
    for (const auto& s : glyph_strokes(digit)) {
        Stroke t;
        t.reserve(s.size());
        for (const auto& p : s) t.push_back(map(p));
        strokes.push_back(std::move(t));
    }

    std::vector<std::uint8_t> image(kSide * kSide, 0);
    for (int y = 0; y < kSide; ++y) {
        for (int x = 0; x < kSide; ++x) {
            const Point p{static_cast<double>(x), static_cast<double>(y)};
            double dist = 1e9;
            for (const auto& s : strokes)
                for (std::size_t i = 0; i + 1 < s.size(); ++i)
                    dist = std::min(dist, segment_distance(p, s[i], s[i + 1]));
            double intensity = 255.0 * std::clamp(1.5 * (radius + 0.5 - dist), 0.0, 1.0);
            intensity += rng.normal() * 10.0;
            if (rng.uniform() < 0.015) intensity += rng.uniform(0.0, 120.0);
            image[static_cast<std::size_t>(y) * kSide + x] =
                static_cast<std::uint8_t>(std::clamp(intensity, 0.0, 255.0));
        }
    }
    return image;
}

} // namespace

DigitSet render_digits(int per_class, std::uint64_t seed) {
    DigitSet set;
    set.images.reserve(static_cast<std::size_t>(per_class) * 10);
    set.labels.reserve(static_cast<std::size_t>(per_class) * 10);
    // interleave classes so file order is not sorted by label
    for (int i = 0; i < per_class; ++i) {
        for (int digit = 0; digit < 10; ++digit) {
            Rng rng(derive_seed(seed, "synth-digit",
                                static_cast<std::uint64_t>(i) * 10 +
                                    static_cast<std::uint64_t>(digit)));
            set.images.push_back(render_one(digit, rng));
            set.labels.push_back(static_cast<std::uint8_t>(digit));
        }
    }
    return set;
}

IdxPaths write_digit_idx(const std::string& dir, const std::string& tag,
                         int per_class, std::uint64_t seed) {
    namespace fs = std::filesystem;
    std::error_code ec;
    fs::create_directories(dir, ec);
    IdxPaths paths;
    const std::string stem = tag + "-v" + std::to_string(kRendererVersion) + "-" +
                             std::to_string(per_class) + "-" + std::to_string(seed);
    paths.images = (fs::path(dir) / (stem + "-images-idx3-ubyte")).string();
    paths.labels = (fs::path(dir) / (stem + "-labels-idx1-ubyte")).string();
    if (fs::exists(paths.images) && fs::exists(paths.labels)) return paths;
    const auto set = render_digits(per_class, seed);
    data::write_idx_pair(paths.images, paths.labels, set.images, kSide, kSide,
                         set.labels);
    return paths;
}

} // namespace qdistill::synth

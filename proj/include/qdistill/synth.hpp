#ifndef QDISTILL_SYNTH_HPP
#define QDISTILL_SYNTH_HPP

#include <cstdint>
#include <string>
#include <vector>

namespace qdistill::synth {

// Deterministic 28x28 digit-glyph renderer: per-class stroke templates with
// random affine distortion, stroke width, and pixel noise. Serves as a
// self-contained stand-in benchmark when no external dataset is available;
// written to disk as standard IDX files so the regular loaders are
// exercised.
struct DigitSet {
    std::vector<std::vector<std::uint8_t>> images; // 28*28 bytes each
    std::vector<std::uint8_t> labels;
};

DigitSet render_digits(int per_class, std::uint64_t seed);

struct IdxPaths {
    std::string images;
    std::string labels;
};

// Renders and writes an IDX pair under dir (creating it); file names embed
// the tag, count and seed so different requests never collide.
IdxPaths write_digit_idx(const std::string& dir, const std::string& tag,
                         int per_class, std::uint64_t seed);

} // namespace qdistill::synth

#endif

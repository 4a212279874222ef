#pragma once

#include "noctr/model.hpp"
#include "noctr/tensor.hpp"

#include <cstdint>
#include <stdexcept>
#include <string>

namespace noctr {

/// Malformed file contents; `offset` is the byte position of the fault.
class FormatError : public std::runtime_error {
public:
    FormatError(const std::string& what, std::size_t offset)
        : std::runtime_error(what + " (byte offset " + std::to_string(offset) + ")"),
          offset_(offset) {}
    std::size_t offset() const { return offset_; }

private:
    std::size_t offset_;
};

/// "NOCT1" grid tensor: 5-byte magic, u8 N, N little-endian u32 dims, then
/// prod(dims) little-endian f32 values in row-major order. The loader
/// rescales values to [0,1] by their min/max unless they already lie in
/// [0,1]; the original range is kept in value_range.
DenseTensor load_grid(const std::string& path);
void save_grid(const DenseTensor& t, const std::string& path);

/// CSV point cloud with columns x,y,z,r,g,b. Spatial coordinates are
/// min-max normalized to [0,1]^3 per axis (degenerate axes map to 0); each
/// point becomes three observations over a 4th-order coordinate space with
/// channel coordinate c in {0, 1/2, 1} for R,G,B. Color values outside
/// [0,1] are jointly min-max normalized.
ObservationSet load_point_cloud(const std::string& path);

enum class SynthKind { SmoothSeparable, SmoothNonseparable, Piecewise };

SynthKind synth_kind_from_name(const std::string& name);
std::string synth_kind_name(SynthKind kind);

/// Deterministic smooth test tensors built from low-frequency sinusoids,
/// scaled to [0,1].
DenseTensor synth(SynthKind kind, const std::vector<int>& shape, std::uint64_t seed);

/// Plain PPM (P3) export with 8-bit round-half-up quantization. The slice
/// must be 2-D (grayscale) or 2-D x 3 (RGB).
void export_ppm(const DenseTensor& slice, const std::string& path);

/// "NOCK1" checkpoint: 5-byte magic, u32 version, u64 JSON topology
/// descriptor length + descriptor, then f64 little-endian parameter arrays
/// in collect_params order. See README for the descriptor schema.
void save_checkpoint(const CtrModel& model, const std::string& path);
CtrModel load_checkpoint(const std::string& path);

}  // namespace noctr

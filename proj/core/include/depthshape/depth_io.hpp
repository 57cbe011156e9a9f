#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <string>

#include "depthshape/sparse_completion.hpp"
#include "depthshape/types.hpp"

namespace depthshape {

/// PFM (grayscale "Pf"), float32 little-endian, bottom-up rows per the PFM
/// convention. Invalid pixels are stored as NaN. A `# unit=...` comment line
/// after the magic carries the depth unit tag; the reader accepts plain PFM
/// without it (unit defaults to metric). Parse errors name the byte offset.
void write_pfm(const DepthMap &depth, const std::filesystem::path &path);
DepthMap read_pfm(const std::filesystem::path &path);

/// 16-bit PGM (P5, maxval 65535, big-endian samples) with a text sidecar
/// `<path>.meta` recording depth = value * scale + offset, the unit tag, and
/// the reserved invalid sample 0. Valid samples quantize to [1, 65535], so the
/// round-trip error is at most scale / 2 for in-range depths.
struct Pgm16Options {
    std::optional<double> scale;  // quantization step; automatic when absent
    std::optional<double> offset; // defaults to min - scale in automatic mode, else 0
};
void write_pgm16(const DepthMap &depth, const std::filesystem::path &path,
                 const Pgm16Options &options = {});
DepthMap read_pgm16(const std::filesystem::path &path);

/// Dense CSV grid with a header line
/// `# depthshape.depth_csv v1 width=W height=H unit=U`; invalid pixels are
/// written as nan. Values round-trip at full double precision.
void write_depth_csv(const DepthMap &depth, const std::filesystem::path &path);
DepthMap read_depth_csv(const std::filesystem::path &path);

enum class PlyFormat : uint8_t { Ascii, BinaryLittleEndian };
enum class PlyColorBy : uint8_t { None, Depth, Segment };

struct PlyWriteOptions {
    PlyFormat format = PlyFormat::BinaryLittleEndian;
    PlyColorBy color_by = PlyColorBy::None;
    /// Per-point segment ids, required for PlyColorBy::Segment.
    std::span<const int> segment_ids;
    bool include_provenance = true; // write row/col properties when available
};

/// PLY point cloud writer (double x/y/z, optional int row/col provenance,
/// optional uchar rgb). Refuses empty clouds.
void write_ply(const PointCloud &cloud, const std::filesystem::path &path,
               const PlyWriteOptions &options = {});

/// Reads clouds written by write_ply (both formats); unknown properties are
/// skipped.
PointCloud read_ply(const std::filesystem::path &path);

/// 8-bit PGM (P5) label masks, the interchange format for planar-region masks
/// (nonzero = region id).
void write_mask_pgm(const Grid<uint8_t> &mask, const std::filesystem::path &path);
Grid<uint8_t> read_mask_pgm(const std::filesystem::path &path);

/// Sparse depth interchange: header
/// `# depthshape.sparse_depth v1 width=W height=H unit=U`, then
/// `row,col,depth` triples.
void write_sparse_csv(const SparseDepth &sparse, const std::filesystem::path &path,
                      DepthUnit unit = DepthUnit::Metric);
SparseDepth read_sparse_csv(const std::filesystem::path &path);

} // namespace depthshape

#pragma once

#include <span>
#include <string>
#include <vector>

#include "depthshape/depth_losses.hpp"
#include "depthshape/rng.hpp"

namespace depthshape {

struct SourceSpec {
    std::string name;
    QualityTier tier = QualityTier::High;
    std::vector<std::string> items; // fixture identifiers (paths)
};

struct BatchEntry {
    int source = 0; // index into the source list
    std::string item;
};

using Batch = std::vector<BatchEntry>;

/// Even per-batch sampling across sources: every batch takes floor(B/S) items
/// from each source, with the B mod S remainder rotating round-robin across
/// batches. Per-source order is a seeded shuffle; sources that run out are
/// reshuffled and recycled. One epoch is emitted: batches continue until every
/// source has been fully consumed at least once. Throws ConfigError for empty
/// sources.
std::vector<Batch> batch_schedule(std::span<const SourceSpec> sources, int batch_size, Rng &rng);

} // namespace depthshape

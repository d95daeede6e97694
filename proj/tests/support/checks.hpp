#pragma once

// Library-versus-oracle comparisons shared by the unit suites and the
// acceptance binary.

#include <cstdint>

namespace fogscene::testing {

/// Largest |library − oracle| over every segmentation score (per-class IoU,
/// mIoU, class-average and global accuracy) of `maps` random 8×8 label maps
/// with K in [2, 19] and about 10 % ignored pixels. Also fails (returns +inf)
/// when the two disagree on which classes have an empty union.
double random_segmentation_deviation(int maps, std::uint64_t seed);

/// Largest |library − oracle| over the seven depth scores of `maps` random
/// 8×8 depth pairs.
double random_depth_deviation(int maps, std::uint64_t seed);

/// Largest deviation of the library's depth scores from their closed forms
/// when pred = c·gt, for c in {2, 1.2, 0.7, 1.3}.
double analytic_depth_deviation();

}  // namespace fogscene::testing

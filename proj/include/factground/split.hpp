#pragma once

#include <cstdint>
#include <vector>

#include "factground/error.hpp"
#include "factground/rng.hpp"

namespace factground {

struct Split {
    std::vector<std::size_t> train, val, test;
};

// 70-10-20 split over a seeded permutation. Folds rotate the permutation so
// each fold sees a different held-out section while staying deterministic.
inline Split make_split(std::size_t n, int folds, int fold, std::uint64_t seed) {
    if (folds < 1) throw UsageError("fold count must be >= 1");
    if (fold < 0 || fold >= folds) throw UsageError("fold index out of range");
    const std::size_t n_train = n * 7 / 10;
    const std::size_t n_val = n / 10;
    if (n_train == 0 || n_val == 0 || n_train + n_val >= n) {
        throw UsageError("corpus too small for a 70-10-20 split");
    }
    std::vector<std::size_t> perm(n);
    for (std::size_t i = 0; i < n; ++i) perm[i] = i;
    Rng rng(derive_seed(seed, 0x51137));
    rng.shuffle(perm);
    const std::size_t offset = n * static_cast<std::size_t>(fold) / static_cast<std::size_t>(folds);

    Split s;
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t idx = perm[(i + offset) % n];
        if (i < n_train) {
            s.train.push_back(idx);
        } else if (i < n_train + n_val) {
            s.val.push_back(idx);
        } else {
            s.test.push_back(idx);
        }
    }
    return s;
}

}  // namespace factground

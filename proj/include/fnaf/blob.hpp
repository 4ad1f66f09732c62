#pragma once

#include <functional>
#include <utility>
#include <vector>

#include "fnaf/rng.hpp"

namespace fnaf {

/// (row, col) offset relative to a blob's anchor pixel.
struct Offset {
    int dr = 0;
    int dc = 0;
    friend auto operator<=>(const Offset&, const Offset&) = default;
};

/// Seeded random 4-connected accretion: starting from the anchor, repeatedly
/// add a uniformly chosen frontier pixel. `allowed(dr, dc)` restricts growth.
/// Returns fewer than `count` offsets only when the allowed region is exhausted.
std::vector<Offset> grow_blob(std::size_t count, Rng& rng, const std::function<bool(int, int)>& allowed);

/// True when the offsets form one 4-connected component.
bool is_four_connected(const std::vector<Offset>& pixels);

} // namespace fnaf

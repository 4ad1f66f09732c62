#include "fnaf/blob.hpp"

#include <algorithm>
#include <set>

namespace fnaf {

namespace {
constexpr Offset kNeighbors[4] = {{-1, 0}, {1, 0}, {0, -1}, {0, 1}};
}

std::vector<Offset> grow_blob(std::size_t count, Rng& rng, const std::function<bool(int, int)>& allowed) {
    std::vector<Offset> pixels;
    if (count == 0 || !allowed(0, 0)) return pixels;
    std::set<Offset> members{{0, 0}};
    // Ordered frontier so the draw sequence is independent of hashing.
    std::set<Offset> frontier_set;
    std::vector<Offset> frontier;
    pixels.push_back({0, 0});
    auto expand = [&](Offset p) {
        for (const auto& n : kNeighbors) {
            const Offset q{p.dr + n.dr, p.dc + n.dc};
            if (members.count(q) || frontier_set.count(q) || !allowed(q.dr, q.dc)) continue;
            frontier_set.insert(q);
            frontier.push_back(q);
        }
    };
    expand({0, 0});
    while (pixels.size() < count && !frontier.empty()) {
        const auto pick = static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(frontier.size()) - 1));
        const Offset q = frontier[pick];
        frontier[pick] = frontier.back();
        frontier.pop_back();
        frontier_set.erase(q);
        members.insert(q);
        pixels.push_back(q);
        expand(q);
    }
    return pixels;
}

bool is_four_connected(const std::vector<Offset>& pixels) {
    if (pixels.empty()) return false;
    std::set<Offset> remaining(pixels.begin(), pixels.end());
    std::vector<Offset> stack{*remaining.begin()};
    remaining.erase(remaining.begin());
    while (!stack.empty()) {
        const Offset p = stack.back();
        stack.pop_back();
        for (const auto& n : kNeighbors) {
            auto it = remaining.find({p.dr + n.dr, p.dc + n.dc});
            if (it == remaining.end()) continue;
            stack.push_back(*it);
            remaining.erase(it);
        }
    }
    return remaining.empty();
}

} // namespace fnaf

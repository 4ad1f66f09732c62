#pragma once

#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "fnaf/field.hpp"

namespace fnaf {

/// Label vocabulary of the knee abnormality annotations.
const std::vector<std::string>& annotation_labels();
bool is_known_label(const std::string& label);

/// Axis-aligned box; x is the column, y the row of the top-left pixel.
struct BoundingBox {
    std::string volume_id;
    int slice = 0;
    std::string label;
    int x = 0;
    int y = 0;
    int w = 1;
    int h = 1;

    [[nodiscard]] long area() const noexcept { return static_cast<long>(w) * h; }
    [[nodiscard]] bool contains(int row, int col) const noexcept {
        return row >= y && row < y + h && col >= x && col < x + w;
    }
    /// True when the box overlaps the rectangle [row, row+height) x [col, col+width) by at least one pixel.
    [[nodiscard]] bool overlaps(int row, int col, int height, int width) const noexcept {
        return row < y + h && y < row + height && col < x + w && x < col + width;
    }
    friend auto operator<=>(const BoundingBox&, const BoundingBox&) = default;
};

using SliceKey = std::pair<std::string, int>;

class AnnotationSet {
public:
    /// Inserts a validated box; identical duplicates are dropped. Returns false for a dropped duplicate.
    bool add(BoundingBox box);

    [[nodiscard]] std::size_t size() const noexcept { return boxes_.size(); }
    [[nodiscard]] bool empty() const noexcept { return boxes_.empty(); }
    [[nodiscard]] const std::vector<BoundingBox>& boxes() const noexcept { return boxes_; }
    [[nodiscard]] std::vector<BoundingBox> boxes_for(const SliceKey& key) const;
    [[nodiscard]] std::vector<SliceKey> slices() const;

private:
    std::vector<BoundingBox> boxes_;
    std::map<SliceKey, std::vector<std::size_t>> by_slice_;
};

nlohmann::ordered_json to_json(const BoundingBox& box);
BoundingBox box_from_json(const nlohmann::json& j);

/// ANNOT v1 JSON lines. Malformed lines raise Parse naming the line; unknown
/// labels raise Vocabulary naming the label.
AnnotationSet load_annotations(const std::filesystem::path& path);
AnnotationSet parse_annotations(const std::string& text);
std::string format_annotations(const AnnotationSet& set);

/// Rasterized box or union of boxes. Boxes outside the image raise Annotation.
RegionMask box_mask(const BoundingBox& box, std::size_t rows, std::size_t cols);
RegionMask box_union_mask(std::span<const BoundingBox> boxes, std::size_t rows, std::size_t cols);

using ImageLookup = std::map<SliceKey, Image2D>;

struct BoxNmse {
    BoundingBox box;
    double nmse = 0.0;
};

struct RegionTable {
    std::vector<BoxNmse> per_box;
    std::map<std::string, double> per_label_mean;
    std::map<std::string, std::size_t> per_label_count;
    /// Mean over every box, not over labels.
    double all = 0.0;
};

RegionTable region_nmse_table(const ImageLookup& recons, const ImageLookup& targets, const AnnotationSet& annset);

/// Per-box CSV {volume_id, slice, label, area, nmse_<method>...}; tables must share box order.
std::string region_csv(const std::vector<std::string>& methods, const std::vector<RegionTable>& tables);

// Statistical tests ---------------------------------------------------------

struct RankSumResult {
    double statistic = 0.0; ///< rank sum of the first sample, midranks for ties
    double p_two_sided = 1.0;
    bool exact = false;
};

/// Two-sided Wilcoxon rank-sum. Exact enumeration when both samples have
/// fewer than 10 values, otherwise the normal approximation with tie and
/// continuity corrections.
RankSumResult wilcoxon_rank_sum(std::span<const double> a, std::span<const double> b);

struct McNemarResult {
    double statistic = 0.0;
    double p = 1.0;
    bool exact = false;
};

/// b, c: discordant counts. Exact binomial below b+c = 25, continuity-corrected chi-square otherwise.
McNemarResult mcnemar(long b, long c);

/// Pearson r between per-box improvement and box area.
double size_correlation(std::span<const double> improvements, std::span<const double> box_areas);

} // namespace fnaf

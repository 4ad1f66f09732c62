#include "fnaf/annot.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "fnaf/grid_io.hpp"
#include "fnaf/ipverify.hpp"

namespace fnaf {

namespace {
constexpr const char* kModule = "annot";
}

const std::vector<std::string>& annotation_labels() {
    static const std::vector<std::string> labels{
        "cart_med_fem", "cart_lat_fem", "cart_med_tib", "cart_lat_tib", "bml_med_fem", "bml_lat_fem",
        "bml_med_tib",  "bml_lat_tib",  "med_men",      "lat_men",      "cyst"};
    return labels;
}

bool is_known_label(const std::string& label) {
    const auto& v = annotation_labels();
    return std::find(v.begin(), v.end(), label) != v.end();
}

bool AnnotationSet::add(BoundingBox box) {
    if (box.w < 1 || box.h < 1) throw Error(ErrorKind::Annotation, kModule, "box width and height must be >= 1");
    if (!is_known_label(box.label)) throw Error(ErrorKind::Vocabulary, kModule, "unknown label '" + box.label + "'");
    const SliceKey key{box.volume_id, box.slice};
    auto& idx = by_slice_[key];
    for (auto i : idx)
        if (boxes_[i] == box) return false;
    idx.push_back(boxes_.size());
    boxes_.push_back(std::move(box));
    return true;
}

std::vector<BoundingBox> AnnotationSet::boxes_for(const SliceKey& key) const {
    std::vector<BoundingBox> out;
    auto it = by_slice_.find(key);
    if (it == by_slice_.end()) return out;
    for (auto i : it->second) out.push_back(boxes_[i]);
    return out;
}

std::vector<SliceKey> AnnotationSet::slices() const {
    std::vector<SliceKey> keys;
    for (const auto& [k, _] : by_slice_) keys.push_back(k);
    return keys;
}

nlohmann::ordered_json to_json(const BoundingBox& box) {
    nlohmann::ordered_json j;
    j["volume_id"] = box.volume_id;
    j["slice"] = box.slice;
    j["label"] = box.label;
    j["x"] = box.x;
    j["y"] = box.y;
    j["w"] = box.w;
    j["h"] = box.h;
    return j;
}

BoundingBox box_from_json(const nlohmann::json& j) {
    BoundingBox b;
    b.volume_id = j.at("volume_id").get<std::string>();
    b.slice = j.at("slice").get<int>();
    b.label = j.at("label").get<std::string>();
    b.x = j.at("x").get<int>();
    b.y = j.at("y").get<int>();
    b.w = j.at("w").get<int>();
    b.h = j.at("h").get<int>();
    return b;
}

AnnotationSet parse_annotations(const std::string& text) {
    AnnotationSet set;
    std::istringstream in(text);
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (std::all_of(line.begin(), line.end(), [](unsigned char ch) { return std::isspace(ch); })) continue;
        BoundingBox box;
        try {
            box = box_from_json(nlohmann::json::parse(line));
        } catch (const nlohmann::json::exception& e) {
            throw Error(ErrorKind::Parse, kModule, "line " + std::to_string(line_no) + ": " + e.what());
        }
        if (box.w < 1 || box.h < 1)
            throw Error(ErrorKind::Parse, kModule, "line " + std::to_string(line_no) + ": w and h must be >= 1");
        if (!is_known_label(box.label))
            throw Error(ErrorKind::Vocabulary, kModule,
                        "line " + std::to_string(line_no) + ": unknown label '" + box.label + "'");
        set.add(std::move(box));
    }
    return set;
}

AnnotationSet load_annotations(const std::filesystem::path& path) { return parse_annotations(io::read_text(path)); }

std::string format_annotations(const AnnotationSet& set) {
    std::string out;
    for (const auto& b : set.boxes()) out += to_json(b).dump() + "\n";
    return out;
}

RegionMask box_union_mask(std::span<const BoundingBox> boxes, std::size_t rows, std::size_t cols) {
    RegionMask mask(rows, cols, 0);
    for (const auto& b : boxes) {
        if (b.x < 0 || b.y < 0 || static_cast<std::size_t>(b.x + b.w) > cols ||
            static_cast<std::size_t>(b.y + b.h) > rows)
            throw Error(ErrorKind::Annotation, kModule,
                        "box " + to_json(b).dump() + " outside " + std::to_string(rows) + "x" + std::to_string(cols));
        for (int r = b.y; r < b.y + b.h; ++r)
            for (int c = b.x; c < b.x + b.w; ++c) mask(r, c) = 1;
    }
    return mask;
}

RegionMask box_mask(const BoundingBox& box, std::size_t rows, std::size_t cols) {
    return box_union_mask(std::span<const BoundingBox>(&box, 1), rows, cols);
}

RegionTable region_nmse_table(const ImageLookup& recons, const ImageLookup& targets, const AnnotationSet& annset) {
    RegionTable table;
    std::map<std::string, double> sums;
    double total = 0.0;
    for (const auto& box : annset.boxes()) {
        const SliceKey key{box.volume_id, box.slice};
        auto rt = recons.find(key);
        auto tt = targets.find(key);
        if (rt == recons.end() || tt == targets.end())
            throw Error(ErrorKind::MissingData, kModule,
                        "no image for volume '" + box.volume_id + "' slice " + std::to_string(box.slice));
        const auto mask = box_mask(box, tt->second.rows(), tt->second.cols());
        const double v = masked_nmse(rt->second, tt->second, mask);
        table.per_box.push_back({box, v});
        sums[box.label] += v;
        table.per_label_count[box.label] += 1;
        total += v;
    }
    for (const auto& [label, s] : sums)
        table.per_label_mean[label] = s / static_cast<double>(table.per_label_count[label]);
    table.all = table.per_box.empty() ? 0.0 : total / static_cast<double>(table.per_box.size());
    return table;
}

std::string region_csv(const std::vector<std::string>& methods, const std::vector<RegionTable>& tables) {
    if (methods.size() != tables.size())
        throw Error(ErrorKind::InvalidInput, kModule, "one table per method required");
    std::ostringstream out;
    out.precision(17);
    out << "volume_id,slice,label,area";
    for (const auto& m : methods) out << ",nmse_" << m;
    out << "\n";
    if (tables.empty()) return out.str();
    const std::size_t n = tables.front().per_box.size();
    for (const auto& t : tables)
        if (t.per_box.size() != n) throw Error(ErrorKind::Alignment, kModule, "tables cover different boxes");
    for (std::size_t i = 0; i < n; ++i) {
        const auto& b = tables.front().per_box[i].box;
        out << b.volume_id << "," << b.slice << "," << b.label << "," << b.area();
        for (const auto& t : tables) {
            if (t.per_box[i].box != b) throw Error(ErrorKind::Alignment, kModule, "box order differs between tables");
            out << "," << t.per_box[i].nmse;
        }
        out << "\n";
    }
    return out.str();
}

// Rank-sum ------------------------------------------------------------------

namespace {

// Midranks of the pooled sample, doubled so ties stay integral.
std::vector<long> doubled_midranks(const std::vector<double>& pooled, std::vector<long>& tie_sizes) {
    const std::size_t n = pooled.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](auto i, auto j) { return pooled[i] < pooled[j]; });
    std::vector<long> ranks(n);
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i;
        while (j + 1 < n && pooled[order[j + 1]] == pooled[order[i]]) ++j;
        // ranks i+1 .. j+1, doubled midrank = (i+1)+(j+1)
        const long r2 = static_cast<long>(i + j + 2);
        for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = r2;
        tie_sizes.push_back(static_cast<long>(j - i + 1));
        i = j + 1;
    }
    return ranks;
}

} // namespace

RankSumResult wilcoxon_rank_sum(std::span<const double> a, std::span<const double> b) {
    if (a.size() < 3 || b.size() < 3)
        throw Error(ErrorKind::InvalidInput, kModule, "rank-sum test needs at least 3 values per sample");
    std::vector<double> pooled(a.begin(), a.end());
    pooled.insert(pooled.end(), b.begin(), b.end());
    const std::size_t n = a.size(), m = b.size(), total = n + m;
    std::vector<long> ties;
    const auto ranks = doubled_midranks(pooled, ties);

    RankSumResult res;
    long w2_a = 0;
    for (std::size_t i = 0; i < n; ++i) w2_a += ranks[i];
    res.statistic = static_cast<double>(w2_a) / 2.0;
    if (ties.size() == 1) {
        res.p_two_sided = 1.0;
        res.exact = n < 10 && m < 10;
        return res;
    }

    if (n < 10 && m < 10) {
        // Enumerate every placement of the first sample's labels over the pooled ranks.
        res.exact = true;
        long max_sum = 0;
        for (auto r : ranks) max_sum += r;
        std::vector<std::vector<double>> ways(n + 1, std::vector<double>(static_cast<std::size_t>(max_sum) + 1, 0.0));
        ways[0][0] = 1.0;
        for (std::size_t idx = 0; idx < total; ++idx) {
            const long r = ranks[idx];
            for (std::size_t k = std::min(n, idx + 1); k >= 1; --k)
                for (long s = max_sum; s >= r; --s) ways[k][s] += ways[k - 1][s - r];
        }
        double all = 0.0, lower = 0.0, upper = 0.0;
        for (long s = 0; s <= max_sum; ++s) {
            const double w = ways[n][s];
            all += w;
            if (s <= w2_a) lower += w;
            if (s >= w2_a) upper += w;
        }
        res.p_two_sided = std::min(1.0, 2.0 * std::min(lower, upper) / all);
        return res;
    }

    const double nd = static_cast<double>(n), md = static_cast<double>(m), td = static_cast<double>(total);
    double tie_term = 0.0;
    for (auto t : ties) tie_term += static_cast<double>(t) * t * t - static_cast<double>(t);
    const double mean = nd * (td + 1.0) / 2.0;
    const double var = nd * md / 12.0 * ((td + 1.0) - tie_term / (td * (td - 1.0)));
    if (var <= 0.0) {
        res.p_two_sided = 1.0;
        return res;
    }
    const double z = std::max(0.0, std::abs(res.statistic - mean) - 0.5) / std::sqrt(var);
    res.p_two_sided = std::min(1.0, std::erfc(z / std::sqrt(2.0)));
    return res;
}

McNemarResult mcnemar(long b, long c) {
    if (b < 0 || c < 0) throw Error(ErrorKind::InvalidInput, kModule, "discordant counts must be non-negative");
    McNemarResult res;
    const long n = b + c;
    if (n == 0) {
        res.exact = true;
        res.p = 1.0;
        return res;
    }
    if (n < 25) {
        res.exact = true;
        const long k = std::min(b, c);
        res.statistic = static_cast<double>(k);
        double coef = 1.0, tail = 0.0;
        for (long i = 0; i <= k; ++i) {
            if (i > 0) coef = coef * static_cast<double>(n - i + 1) / static_cast<double>(i);
            tail += coef;
        }
        res.p = std::min(1.0, 2.0 * tail * std::pow(0.5, static_cast<double>(n)));
        return res;
    }
    const double diff = std::max(0.0, std::abs(static_cast<double>(b - c)) - 1.0);
    res.statistic = diff * diff / static_cast<double>(n);
    res.p = std::erfc(std::sqrt(res.statistic / 2.0));
    return res;
}

double size_correlation(std::span<const double> improvements, std::span<const double> box_areas) {
    return pearson_correlation(improvements, box_areas);
}

} // namespace fnaf

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "fnaf/annot.hpp"
#include "fnaf/blob.hpp"
#include "fnaf/field.hpp"

namespace fnaf {

struct PhantomSpec {
    std::size_t size = 128;
    std::size_t n_ellipses = 6; ///< random texture ellipses on top of the fixed anatomy
    double intensity_lo = 0.05;
    double intensity_hi = 0.25;
    double noise_sigma = 0.005;
    std::uint64_t seed = 0;

    void validate() const;
};

enum class LesionKind { Bml, Cartilage, Meniscus, Cyst };

std::string_view to_string(LesionKind kind);

struct Lesion {
    int row = 0;
    int col = 0;
    std::size_t pixel_count = 10;
    double contrast = 0.3; ///< signed intensity delta
    LesionKind kind = LesionKind::Bml;
    std::uint64_t shape_seed = 0;
};

struct PlantedLesion {
    Image2D image;
    BoundingBox box;
    std::vector<Offset> pixels; ///< absolute (row, col) of every modified pixel
};

/// Knee-like phantom: femur and tibia with cartilage bands, a meniscus wedge
/// pair and soft tissue, plus random texture ellipses; soft edges, Gaussian
/// noise, min-max normalized to [0, 1].
Image2D generate_phantom(const PhantomSpec& spec);

/// Adds `contrast` on a 4-connected blob grown from the lesion center.
/// `volume_id`/`slice` fill the returned box. Out-of-bounds or unplaceable
/// lesions raise Placement.
PlantedLesion plant_lesion(const Image2D& img, const Lesion& lesion, const std::string& volume_id = "",
                           int slice = 0);

/// Random lesion in the central joint region of an image of side `size`.
Lesion random_lesion(std::size_t size, Rng& rng);

/// Annotation label for a lesion kind at a location, e.g. bml on the upper left -> bml_med_fem.
std::string annotation_label(LesionKind kind, int row, int col, std::size_t size);

struct DatasetImage {
    std::string id;
    Image2D target;
    std::vector<BoundingBox> boxes;
};

struct InMemoryDataset {
    std::vector<DatasetImage> train;
    std::vector<DatasetImage> val;
};

/// Deterministic in-memory dataset; each image gets one lesion with probability lesion_rate.
InMemoryDataset generate_dataset(std::size_t n_train, std::size_t n_val, double lesion_rate, const PhantomSpec& spec);

struct DatasetManifest {
    std::filesystem::path root;
    PhantomSpec spec;
    double lesion_rate = 0.0;
    std::vector<std::string> train_ids;
    std::vector<std::string> val_ids;

    [[nodiscard]] std::filesystem::path image_stem(const std::string& id) const { return root / "images" / id; }
    [[nodiscard]] std::filesystem::path annotations(const std::string& split) const {
        return root / ("annotations_" + split + ".jsonl");
    }
};

/// Writes FGRID images, ANNOT v1 annotation files per split and manifest.json under `root`.
DatasetManifest build_dataset(std::size_t n_train, std::size_t n_val, double lesion_rate, const PhantomSpec& spec,
                              const std::filesystem::path& root);

DatasetManifest load_manifest(const std::filesystem::path& root);

/// Reads images and boxes of one split ("train" or "val") back from disk.
std::vector<DatasetImage> load_split(const DatasetManifest& manifest, const std::string& split);

nlohmann::ordered_json to_json(const PhantomSpec& spec);
PhantomSpec phantom_spec_from_json(const nlohmann::json& j);

} // namespace fnaf

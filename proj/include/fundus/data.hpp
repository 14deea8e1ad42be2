#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "fundus/metrics.hpp"
#include "fundus/preprocess.hpp"

namespace fundus {

struct ManifestEntry {
    std::string id;
    std::filesystem::path image;  // relative to the manifest directory
    std::optional<std::filesystem::path> disc;
    std::optional<std::filesystem::path> cup;

    friend bool operator==(const ManifestEntry&, const ManifestEntry&) = default;
};

/// Normalized layout: images/<id>.png, disc/<id>.png, cup/<id>.png and manifest.csv
/// with header `id,image,disc,cup` (empty field = mask absent).
struct DatasetManifest {
    std::string name;
    std::filesystem::path root;
    std::vector<ManifestEntry> entries;
    std::map<std::string, int> folds;  // optional, from folds.csv next to the manifest
};

/// A decoded dataset entry.
struct Sample {
    std::string id;
    FundusImage image;
    std::optional<BinaryMask> disc;
    std::optional<BinaryMask> cup;
};

struct Dataset {
    DatasetManifest manifest;
    std::vector<Sample> samples;
};

DatasetManifest read_manifest(const std::filesystem::path& manifest_csv);
void write_manifest(const DatasetManifest& manifest, const std::filesystem::path& manifest_csv);
/// Decodes and validates every entry; throws DataError naming the offending entry.
Dataset load_dataset(const std::filesystem::path& manifest_csv);

FundusImage read_image(const std::filesystem::path& path, std::string source_id = {});
void write_image(const FundusImage& img, const std::filesystem::path& path);
BinaryMask read_mask(const std::filesystem::path& path);
void write_mask(const BinaryMask& mask, const std::filesystem::path& path);

std::map<std::string, int> read_folds(const std::filesystem::path& folds_csv);
void write_folds(const std::map<std::string, int>& folds, const std::filesystem::path& folds_csv);

struct SyntheticEye {
    Sample sample;
    double true_cdr = 0.0;
};

struct SynthOptions {
    double cup_ratio_min = 0.3;  // cup height over disc height, drawn uniformly
    double cup_ratio_max = 0.9;
};

/// Dark circular fundus field with a bright disc ellipse and a nested brighter cup,
/// vessel-like streaks and mild noise.
std::vector<SyntheticEye> synth_generate(int n, std::uint64_t seed, Dims dims = {256, 256},
                                         const SynthOptions& options = {});

/// Writes the normalized layout plus truth.csv (`id,cdr`) under `root`.
DatasetManifest write_synthetic_dataset(const std::vector<SyntheticEye>& eyes, const std::filesystem::path& root,
                                        const std::string& name = "synthetic");
std::map<std::string, double> read_truth(const std::filesystem::path& truth_csv);

}  // namespace fundus

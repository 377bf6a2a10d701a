#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "lesionmap/image.hpp"

namespace lesionmap {

inline constexpr int kNumGrades = 5;  // normal, mild, moderate, severe, proliferative

struct LesionBox {
    int x = 0, y = 0, w = 0, h = 0;  // pixels; covers [x, x+w) x [y, y+h)

    bool contains(int px, int py, int margin = 0) const {
        return px >= x - margin && px < x + w + margin && py >= y - margin && py < y + h + margin;
    }
    friend bool operator==(const LesionBox&, const LesionBox&) = default;
};

struct DatasetRecord {
    std::string id;
    std::filesystem::path path;
    int label = 0;
    std::vector<LesionBox> boxes;  // synthetic data only
};

enum class DatasetErrorKind { malformed_csv, missing_file, label_out_of_range, duplicate_id, io_failure };

class DatasetError : public std::runtime_error {
public:
    DatasetError(DatasetErrorKind kind, int line, const std::string& message)
        : std::runtime_error(line > 0 ? "line " + std::to_string(line) + ": " + message : message),
          kind_(kind),
          line_(line) {}
    DatasetErrorKind kind() const noexcept { return kind_; }
    int line() const noexcept { return line_; }  // 1-based line in the CSV, 0 if not applicable

private:
    DatasetErrorKind kind_;
    int line_;
};

/// Reads an `id,label` CSV and resolves each id to a file under `image_dir`
/// (the id itself, or the id with a .png/.ppm/.pgm extension). Records keep
/// CSV order.
std::vector<DatasetRecord> load_labeled_dataset(const std::filesystem::path& image_dir,
                                                const std::filesystem::path& labels_csv,
                                                int num_classes = kNumGrades);

/// Reads `id,label,box_x,box_y,box_w,box_h` rows grouped by id.
std::map<std::string, std::vector<LesionBox>> load_boxes_csv(const std::filesystem::path& path);
void attach_boxes(std::vector<DatasetRecord>& records, const std::map<std::string, std::vector<LesionBox>>& boxes);

std::string labels_csv(const std::vector<DatasetRecord>& records);
std::string boxes_csv(const std::vector<DatasetRecord>& records);

struct SplitFractions {
    double train = 0.8;
    double val = 0.1;
    double test = 0.1;
};

struct DatasetSplit {
    std::vector<DatasetRecord> train, val, test;
    std::vector<std::string> warnings;
};

/// Per class: seeded shuffle, then largest-remainder allocation of the
/// fractions. Each split keeps the input order of its records.
DatasetSplit stratified_split(const std::vector<DatasetRecord>& records, SplitFractions fractions, std::uint64_t seed);

struct ClassDistribution {
    std::vector<std::size_t> counts;
    std::vector<double> fractions;
    std::size_t total = 0;
};

ClassDistribution class_distribution(const std::vector<DatasetRecord>& records, int num_classes = kNumGrades);
std::string render_distribution(const ClassDistribution& dist, const std::vector<std::string>& class_names);

// ---- synthetic fundus-like images ------------------------------------------------

struct SynthImage {
    Image image;
    std::vector<LesionBox> boxes;
};

/// One image of grade `label`: dark surround, bright disc with a radial
/// falloff and per-pixel noise, and `label` non-overlapping bright or dark
/// blobs fully inside the disc. Blob radius is about (2.5 + label) px at
/// 64 px and scales with the image size.
SynthImage synth_image(int label, int image_size, std::uint64_t seed);

/// Writes `count` class-balanced PNGs plus labels.csv and boxes.csv to `out_dir`.
std::vector<DatasetRecord> synth_generate(const std::filesystem::path& out_dir, int count, int num_classes,
                                          int image_size, std::uint64_t seed, int threads = 1);

}  // namespace lesionmap

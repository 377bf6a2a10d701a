#include "lesionmap/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <set>
#include <sstream>

#include "lesionmap/file_util.hpp"
#include "lesionmap/image_io.hpp"
#include "lesionmap/parallel.hpp"
#include "lesionmap/random.hpp"

namespace lesionmap {

namespace fs = std::filesystem;

namespace {

std::vector<std::string> split_csv_line(std::string line) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::vector<std::string> fields;
    std::string cur;
    std::istringstream in(line);
    while (std::getline(in, cur, ',')) fields.push_back(cur);
    if (!line.empty() && line.back() == ',') fields.emplace_back();
    return fields;
}

std::vector<std::string> read_lines(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw DatasetError(DatasetErrorKind::io_failure, 0, "cannot open " + path.string());
    std::vector<std::string> lines;
    std::string line;
    while (std::getline(in, line)) lines.push_back(line);
    return lines;
}

bool parse_int_field(const std::string& s, int& out) {
    if (s.empty()) return false;
    std::size_t i = s[0] == '-' ? 1 : 0;
    if (i == s.size()) return false;
    long v = 0;
    for (; i < s.size(); ++i) {
        if (s[i] < '0' || s[i] > '9') return false;
        v = v * 10 + (s[i] - '0');
        if (v > 1'000'000'000) return false;
    }
    out = static_cast<int>(s[0] == '-' ? -v : v);
    return true;
}

fs::path resolve_image(const fs::path& dir, const std::string& id) {
    for (const char* ext : {"", ".png", ".ppm", ".pgm"}) {
        const fs::path candidate = dir / (id + ext);
        std::error_code ec;
        if (fs::is_regular_file(candidate, ec)) return candidate;
    }
    return {};
}

}  // namespace

std::vector<DatasetRecord> load_labeled_dataset(const fs::path& image_dir, const fs::path& labels_csv,
                                                int num_classes) {
    const auto lines = read_lines(labels_csv);
    if (lines.empty()) throw DatasetError(DatasetErrorKind::malformed_csv, 1, "labels CSV is empty");
    const auto header = split_csv_line(lines[0]);
    if (header != std::vector<std::string>{"id", "label"}) {
        throw DatasetError(DatasetErrorKind::malformed_csv, 1, "labels CSV header must be 'id,label'");
    }
    std::vector<DatasetRecord> records;
    std::set<std::string> seen;
    for (std::size_t n = 1; n < lines.size(); ++n) {
        const int line_no = static_cast<int>(n + 1);
        if (lines[n].empty() || lines[n] == "\r") continue;
        const auto fields = split_csv_line(lines[n]);
        if (fields.size() != 2 || fields[0].empty()) {
            throw DatasetError(DatasetErrorKind::malformed_csv, line_no, "expected 'id,label', got '" + lines[n] + "'");
        }
        int label = 0;
        if (!parse_int_field(fields[1], label)) {
            throw DatasetError(DatasetErrorKind::malformed_csv, line_no, "label '" + fields[1] + "' is not an integer");
        }
        if (label < 0 || label >= num_classes) {
            throw DatasetError(DatasetErrorKind::label_out_of_range, line_no,
                               "label " + fields[1] + " for '" + fields[0] + "' is outside 0.." +
                                   std::to_string(num_classes - 1));
        }
        if (!seen.insert(fields[0]).second) {
            throw DatasetError(DatasetErrorKind::duplicate_id, line_no, "duplicate id '" + fields[0] + "'");
        }
        fs::path path = resolve_image(image_dir, fields[0]);
        if (path.empty()) {
            throw DatasetError(DatasetErrorKind::missing_file, line_no,
                               "no image file for '" + fields[0] + "' under " + image_dir.string());
        }
        records.push_back({fields[0], std::move(path), label, {}});
    }
    return records;
}

std::map<std::string, std::vector<LesionBox>> load_boxes_csv(const fs::path& path) {
    const auto lines = read_lines(path);
    if (lines.empty() ||
        split_csv_line(lines[0]) != std::vector<std::string>{"id", "label", "box_x", "box_y", "box_w", "box_h"}) {
        throw DatasetError(DatasetErrorKind::malformed_csv, 1, "boxes CSV header must be 'id,label,box_x,box_y,box_w,box_h'");
    }
    std::map<std::string, std::vector<LesionBox>> boxes;
    for (std::size_t n = 1; n < lines.size(); ++n) {
        if (lines[n].empty() || lines[n] == "\r") continue;
        const auto f = split_csv_line(lines[n]);
        int v[5];
        bool ok = f.size() == 6 && !f[0].empty();
        for (int i = 0; ok && i < 5; ++i) ok = parse_int_field(f[static_cast<std::size_t>(i + 1)], v[i]);
        if (!ok) throw DatasetError(DatasetErrorKind::malformed_csv, static_cast<int>(n + 1), "malformed box row");
        boxes[f[0]].push_back({v[1], v[2], v[3], v[4]});
    }
    return boxes;
}

void attach_boxes(std::vector<DatasetRecord>& records, const std::map<std::string, std::vector<LesionBox>>& boxes) {
    for (auto& r : records) {
        const auto it = boxes.find(r.id);
        r.boxes = it == boxes.end() ? std::vector<LesionBox>{} : it->second;
    }
}

std::string labels_csv(const std::vector<DatasetRecord>& records) {
    std::string out = "id,label\n";
    for (const auto& r : records) out += r.id + "," + std::to_string(r.label) + "\n";
    return out;
}

std::string boxes_csv(const std::vector<DatasetRecord>& records) {
    std::string out = "id,label,box_x,box_y,box_w,box_h\n";
    for (const auto& r : records) {
        for (const auto& b : r.boxes) {
            out += r.id + "," + std::to_string(r.label) + "," + std::to_string(b.x) + "," + std::to_string(b.y) + "," +
                   std::to_string(b.w) + "," + std::to_string(b.h) + "\n";
        }
    }
    return out;
}

DatasetSplit stratified_split(const std::vector<DatasetRecord>& records, SplitFractions fractions, std::uint64_t seed) {
    const double f[3] = {fractions.train, fractions.val, fractions.test};
    if (!(f[0] > 0 && f[1] > 0 && f[2] > 0) || std::abs(f[0] + f[1] + f[2] - 1.0) > 1e-9) {
        throw std::invalid_argument("split fractions must be positive and sum to 1");
    }
    std::map<int, std::vector<std::size_t>> by_class;
    for (std::size_t i = 0; i < records.size(); ++i) by_class[records[i].label].push_back(i);

    DatasetSplit split;
    std::vector<int> assignment(records.size(), 0);
    for (auto& [label, members] : by_class) {
        const std::size_t n = members.size();
        if (n < 3) {
            split.warnings.push_back("class " + std::to_string(label) + " has only " + std::to_string(n) +
                                     " sample(s); some splits get none of it");
        }
        Rng rng(mix_seed(seed, 0x5350'4c54ULL, static_cast<std::uint64_t>(label)));
        rng.shuffle(std::span<std::size_t>(members));

        std::size_t quota[3];
        double remainder[3];
        std::size_t assigned = 0;
        for (int s = 0; s < 3; ++s) {
            const double exact = f[s] * static_cast<double>(n);
            quota[s] = static_cast<std::size_t>(std::floor(exact + 1e-9));
            remainder[s] = exact - static_cast<double>(quota[s]);
            assigned += quota[s];
        }
        while (assigned < n) {
            int best = 0;
            for (int s = 1; s < 3; ++s) {
                if (remainder[s] > remainder[best] + 1e-12) best = s;
            }
            ++quota[best];
            remainder[best] = -1.0;
            ++assigned;
        }
        std::size_t pos = 0;
        for (int s = 0; s < 3; ++s) {
            for (std::size_t k = 0; k < quota[s]; ++k) assignment[members[pos++]] = s;
        }
    }
    for (std::size_t i = 0; i < records.size(); ++i) {
        (assignment[i] == 0 ? split.train : assignment[i] == 1 ? split.val : split.test).push_back(records[i]);
    }
    return split;
}

ClassDistribution class_distribution(const std::vector<DatasetRecord>& records, int num_classes) {
    ClassDistribution d;
    d.counts.assign(static_cast<std::size_t>(num_classes), 0);
    for (const auto& r : records) {
        if (r.label < 0 || r.label >= num_classes) {
            throw std::out_of_range("record '" + r.id + "' has label " + std::to_string(r.label));
        }
        ++d.counts[static_cast<std::size_t>(r.label)];
    }
    d.total = records.size();
    for (auto c : d.counts) d.fractions.push_back(d.total ? static_cast<double>(c) / static_cast<double>(d.total) : 0.0);
    return d;
}

std::string render_distribution(const ClassDistribution& dist, const std::vector<std::string>& class_names) {
    std::ostringstream out;
    char buf[128];
    std::snprintf(buf, sizeof buf, "%-14s %8s %9s\n", "class", "count", "fraction");
    out << buf;
    for (std::size_t c = 0; c < dist.counts.size(); ++c) {
        const std::string name = c < class_names.size() ? class_names[c] : std::to_string(c);
        std::snprintf(buf, sizeof buf, "%-14s %8zu %9.4f\n", name.c_str(), dist.counts[c], dist.fractions[c]);
        out << buf;
    }
    std::snprintf(buf, sizeof buf, "%-14s %8zu\n", "total", dist.total);
    out << buf;
    return out.str();
}

// ---- synthetic generator -------------------------------------------------------

namespace {

struct Blob {
    double cx, cy, radius;
    bool bright;
};

std::uint8_t to_level(double v) { return static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L)); }

LesionBox blob_box(const Blob& b) {
    // pixels with any blob coverage satisfy |p - c| < r + 0.5
    const int x0 = static_cast<int>(std::ceil(b.cx - b.radius - 0.5));
    const int x1 = static_cast<int>(std::floor(b.cx + b.radius + 0.5));
    const int y0 = static_cast<int>(std::ceil(b.cy - b.radius - 0.5));
    const int y1 = static_cast<int>(std::floor(b.cy + b.radius + 0.5));
    return {x0, y0, x1 - x0 + 1, y1 - y0 + 1};
}

}  // namespace

SynthImage synth_image(int label, int image_size, std::uint64_t seed) {
    if (image_size < 32) throw std::invalid_argument("synthetic image size must be >= 32");
    if (label < 0) throw std::invalid_argument("synthetic label must be non-negative");
    Rng rng(seed);
    const double size = image_size;
    const double scale = size / 64.0;
    const double center = (size - 1.0) / 2.0;
    const double disc_radius = 0.46 * size;
    const double base = rng.uniform(135.0, 165.0);
    const double tint_g = rng.uniform(0.50, 0.60), tint_b = rng.uniform(0.25, 0.35);

    std::vector<Blob> blobs;
    int attempts = 0;
    for (int placed = 0; placed < label;) {
        if (++attempts > 100000) {
            throw std::invalid_argument("cannot fit " + std::to_string(label) + " lesions into a " +
                                        std::to_string(image_size) + " px image");
        }
        Blob b;
        // lesions grow with grade so each grade has its own visual signature
        b.radius = (2.5 + label + rng.uniform(-0.25, 0.25)) * scale;
        const double max_offset = disc_radius - (b.radius + 0.5) * std::numbers::sqrt2 - 1.5;
        const double angle = rng.uniform(0.0, 2.0 * std::numbers::pi);
        const double dist = max_offset * std::sqrt(rng.uniform());
        b.cx = center + dist * std::cos(angle);
        b.cy = center + dist * std::sin(angle);
        b.bright = rng.bernoulli(0.5);
        bool clear = true;
        for (const auto& o : blobs) {
            if (std::hypot(o.cx - b.cx, o.cy - b.cy) < o.radius + b.radius + 3.0 * scale) clear = false;
        }
        if (clear) {
            blobs.push_back(b);
            ++placed;
        }
    }

    SynthImage out{Image(image_size, image_size, 3), {}};
    for (int y = 0; y < image_size; ++y) {
        for (int x = 0; x < image_size; ++x) {
            const double r = std::hypot(x - center, y - center);
            const double inside = std::clamp(disc_radius + 0.5 - r, 0.0, 1.0);
            const double falloff = 1.0 - 0.3 * (r / disc_radius) * (r / disc_radius);
            const double lum = base * falloff;
            double rgb[3] = {lum, lum * tint_g, lum * tint_b};
            for (const auto& b : blobs) {
                const double cover = std::clamp(b.radius + 0.5 - std::hypot(x - b.cx, y - b.cy), 0.0, 1.0);
                if (cover <= 0.0) continue;
                for (auto& v : rgb) v += cover * ((b.bright ? 255.0 : 0.0) - v);
            }
            for (int c = 0; c < 3; ++c) {
                const double background = 8.0;
                const double v = inside * rgb[c] + (1.0 - inside) * background + 3.0 * rng.normal();
                out.image.at(y, x, c) = to_level(v);
            }
        }
    }
    for (const auto& b : blobs) out.boxes.push_back(blob_box(b));
    return out;
}

std::vector<DatasetRecord> synth_generate(const fs::path& out_dir, int count, int num_classes, int image_size,
                                          std::uint64_t seed, int threads) {
    if (num_classes < 1) throw std::invalid_argument("synthetic data needs at least one class");
    if (count < num_classes) throw std::invalid_argument("synthetic count must be at least the number of classes");
    if (image_size < 32) throw std::invalid_argument("synthetic image size must be >= 32");
    std::error_code ec;
    fs::create_directories(out_dir, ec);
    if (ec) throw IoError("cannot create " + out_dir.string() + ": " + ec.message());

    std::vector<DatasetRecord> records(static_cast<std::size_t>(count));
    parallel_for(records.size(), threads, [&](std::size_t i) {
        char name[32];
        std::snprintf(name, sizeof name, "synth_%05zu", i);
        const int label = static_cast<int>(i % static_cast<std::size_t>(num_classes));
        SynthImage s = synth_image(label, image_size, mix_seed(seed, 0x53594e54ULL, i));
        DatasetRecord& r = records[i];
        r.id = name;
        r.path = out_dir / (r.id + ".png");
        r.label = label;
        r.boxes = std::move(s.boxes);
        write_image(r.path, s.image);
    });
    write_file_atomic(out_dir / "labels.csv", labels_csv(records));
    write_file_atomic(out_dir / "boxes.csv", boxes_csv(records));
    return records;
}

}  // namespace lesionmap

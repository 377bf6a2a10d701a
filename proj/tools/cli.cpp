#include "cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <charconv>
#include <filesystem>
#include <limits>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>

#include "lesionmap/config_text.hpp"
#include "lesionmap/dataset.hpp"
#include "lesionmap/evaluation.hpp"
#include "lesionmap/file_util.hpp"
#include "lesionmap/gradcam.hpp"
#include "lesionmap/image_io.hpp"
#include "lesionmap/parallel.hpp"
#include "lesionmap/training.hpp"

namespace lesionmap::cli {

namespace fs = std::filesystem;

namespace {

/// A problem with the command line itself, reported with exit code 2.
class UsageError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

std::string format_double(double v) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

double parse_double(const std::string& text, const std::string& what) {
    const std::string t = trim(text);
    double v = 0.0;
    const auto res = std::from_chars(t.data(), t.data() + t.size(), v);
    if (t.empty() || res.ec != std::errc() || res.ptr != t.data() + t.size()) {
        throw std::invalid_argument(what + ": '" + text + "' is not a number");
    }
    return v;
}

int parse_int(const std::string& text, const std::string& what) {
    const std::string t = trim(text);
    int v = 0;
    const auto res = std::from_chars(t.data(), t.data() + t.size(), v);
    if (t.empty() || res.ec != std::errc() || res.ptr != t.data() + t.size()) {
        throw std::invalid_argument(what + ": '" + text + "' is not an integer");
    }
    return v;
}

bool parse_bool(const std::string& text, const std::string& what) {
    const std::string t = trim(text);
    if (t == "true" || t == "1") return true;
    if (t == "false" || t == "0") return false;
    throw std::invalid_argument(what + ": '" + text + "' is not true or false");
}

std::vector<double> parse_list(const std::string& text, const std::string& what) {
    std::vector<double> out;
    std::stringstream in(text);
    std::string item;
    while (std::getline(in, item, ',')) out.push_back(parse_double(item, what));
    if (out.empty()) throw std::invalid_argument(what + ": empty list");
    return out;
}

std::string format_list(const std::vector<double>& values) {
    std::string out;
    for (std::size_t i = 0; i < values.size(); ++i) out += (i ? "," : "") + format_double(values[i]);
    return out;
}

std::string unquote(const std::string& s) {
    if (s.size() >= 2 && (s.front() == '"' || s.front() == '\'') && s.back() == s.front()) {
        return s.substr(1, s.size() - 2);
    }
    return s;
}

// ---- options shared by several subcommands ---------------------------------------

/// Reads `key = value` lines and applies each one to the matching option of
/// `sub` unless the command line already set it. Keys are option names
/// without the leading dashes; '_' and '-' are interchangeable.
void apply_config_file(CLI::App& sub, const std::string& path) {
    const auto bytes = read_file_bytes(path);
    std::vector<std::pair<std::string, std::string>> entries;
    try {
        entries = parse_key_values(std::string(bytes.begin(), bytes.end()));
    } catch (const ConfigSyntaxError& e) {
        throw UsageError("config file " + path + ": " + e.what());
    }
    for (const auto& [key, value] : entries) {
        std::string name = key;
        std::replace(name.begin(), name.end(), '_', '-');
        CLI::Option* opt = sub.get_option_no_throw("--" + name);
        if (opt == nullptr || !opt->get_configurable()) {
            throw UsageError("config file " + path + ": unknown key '" + key + "' for '" + sub.get_name() + "'");
        }
        if (opt->count() > 0) continue;
        opt->add_result(unquote(value));
        opt->run_callback();
    }
}

void require_options(const CLI::App& sub, std::initializer_list<const char*> names) {
    for (const char* name : names) {
        if (sub.get_option(name)->count() == 0) {
            throw UsageError(std::string(name) + " is required (on the command line or in --config)");
        }
    }
}

void log_resolved_config(const CLI::App& sub, std::ostream& err) {
    err << "# resolved configuration: " << sub.get_name() << "\n" << sub.config_to_str(true, false) << std::flush;
}

struct PreprocessingFlags {
    bool clahe = false;
    int tiles = 8;
    double clip = 2.0;

    void add_to(CLI::App& sub) {
        sub.add_flag("--clahe", clahe, "Apply CLAHE to the luma channel");
        sub.add_option("--tiles", tiles, "CLAHE tile grid is T x T")->check(CLI::PositiveNumber)->capture_default_str();
        sub.add_option("--clip", clip, "CLAHE clip factor (>= 1); a very large value disables clipping")
            ->check(CLI::Range(1.0, std::numeric_limits<double>::max()))
            ->capture_default_str();
    }
};

struct NormalizationFlags {
    std::string mean = "0.5";
    std::string stddev = "0.5";

    void add_to(CLI::App& sub) {
        sub.add_option("--mean", mean, "Per-channel mean on the [0,1] scale, one value or one per channel")
            ->capture_default_str();
        sub.add_option("--stddev", stddev, "Per-channel standard deviation on the [0,1] scale")->capture_default_str();
    }
};

// ---- dataset helpers -------------------------------------------------------------

std::string class_name(int c, int num_classes) {
    const auto names = default_class_names();
    if (num_classes == static_cast<int>(names.size())) return names[static_cast<std::size_t>(c)];
    return "class " + std::to_string(c);
}

std::vector<std::string> class_names(int num_classes) {
    std::vector<std::string> names;
    for (int c = 0; c < num_classes; ++c) names.push_back(class_name(c, num_classes));
    return names;
}

std::string images_dir_or_default(const std::string& images, const std::string& labels) {
    if (!images.empty()) return images;
    const fs::path parent = fs::path(labels).parent_path();
    return parent.empty() ? std::string(".") : parent.string();
}

std::vector<Image> read_images(const std::vector<DatasetRecord>& records, int threads) {
    std::vector<Image> images(records.size());
    parallel_for(records.size(), threads, [&](std::size_t i) { images[i] = read_image(records[i].path); });
    return images;
}

ModelSidecar read_sidecar(const std::string& weights) {
    const std::string path = sidecar_path(weights);
    if (!fs::exists(path)) throw IoError("missing model settings file " + path + " (written by 'train')");
    const auto bytes = read_file_bytes(path);
    return parse_sidecar(std::string(bytes.begin(), bytes.end()));
}

bool is_directory_target(const std::string& out) {
    return !out.empty() && (out.back() == '/' || out.back() == fs::path::preferred_separator || fs::is_directory(out));
}

// ---- subcommands -----------------------------------------------------------------

struct SynthCommand {
    std::string out;
    int count = 2500, classes = kNumGrades, size = 64, threads = default_thread_count();
    std::uint64_t seed = 0;

    void add_to(CLI::App& sub) {
        sub.add_option("--out", out, "Output directory");
        sub.add_option("--count", count, "Number of images")->check(CLI::PositiveNumber)->capture_default_str();
        sub.add_option("--classes", classes, "Number of grades")->check(CLI::PositiveNumber)->capture_default_str();
        sub.add_option("--size", size, "Image side in pixels")->check(CLI::Range(32, 4096))->capture_default_str();
        sub.add_option("--seed", seed, "Random seed")->capture_default_str();
        sub.add_option("--threads", threads, "Worker threads")->check(CLI::PositiveNumber)->capture_default_str();
    }

    void run(const CLI::App& sub, std::ostream& out_stream) const {
        require_options(sub, {"--out"});
        const auto records = synth_generate(out, count, classes, size, seed, threads);
        out_stream << "wrote " << records.size() << " images, labels.csv and boxes.csv to " << out << "\n";
        out_stream << render_distribution(class_distribution(records, classes), class_names(classes));
    }
};

struct StatsCommand {
    std::string labels, images;
    int classes = kNumGrades;

    void add_to(CLI::App& sub) {
        sub.add_option("--labels", labels, "Labels CSV (id,label)");
        sub.add_option("--images", images, "Image directory; defaults to the CSV's directory");
        sub.add_option("--classes", classes, "Number of grades")->check(CLI::PositiveNumber)->capture_default_str();
    }

    void run(const CLI::App& sub, std::ostream& out) const {
        require_options(sub, {"--labels"});
        const auto records = load_labeled_dataset(images_dir_or_default(images, labels), labels, classes);
        out << render_distribution(class_distribution(records, classes), class_names(classes));
    }
};

struct SplitCommand {
    std::string labels, images, out;
    double train = 0.8, val = 0.1, test = 0.1;
    std::uint64_t seed = 0;
    int classes = kNumGrades;

    void add_to(CLI::App& sub) {
        sub.add_option("--labels", labels, "Labels CSV (id,label)");
        sub.add_option("--images", images, "Image directory; defaults to the CSV's directory");
        sub.add_option("--out", out, "Directory for train.csv, val.csv and test.csv");
        sub.add_option("--train", train, "Training fraction")->check(CLI::Range(0.0, 1.0))->capture_default_str();
        sub.add_option("--val", val, "Validation fraction")->check(CLI::Range(0.0, 1.0))->capture_default_str();
        sub.add_option("--test", test, "Test fraction")->check(CLI::Range(0.0, 1.0))->capture_default_str();
        sub.add_option("--seed", seed, "Random seed")->capture_default_str();
        sub.add_option("--classes", classes, "Number of grades")->check(CLI::PositiveNumber)->capture_default_str();
    }

    void run(const CLI::App& sub, std::ostream& out_stream, std::ostream& err) const {
        require_options(sub, {"--labels", "--out"});
        const auto records = load_labeled_dataset(images_dir_or_default(images, labels), labels, classes);
        const DatasetSplit split = stratified_split(records, {train, val, test}, seed);
        for (const auto& w : split.warnings) err << "warning: " << w << "\n";
        fs::create_directories(out);
        write_file_atomic(fs::path(out) / "train.csv", labels_csv(split.train));
        write_file_atomic(fs::path(out) / "val.csv", labels_csv(split.val));
        write_file_atomic(fs::path(out) / "test.csv", labels_csv(split.test));
        out_stream << "train " << split.train.size() << ", val " << split.val.size() << ", test " << split.test.size()
                   << " written to " << out << "\n";
    }
};

struct PreprocessCommand {
    std::string in, out, hist_csv;
    int resize = 0, threads = default_thread_count();
    PreprocessingFlags pre;

    void add_to(CLI::App& sub) {
        sub.add_option("--in", in, "Input image directory");
        sub.add_option("--out", out, "Output directory (PNG files)");
        pre.add_to(sub);
        sub.add_option("--resize", resize, "Resize to N x N; 0 keeps the size")
            ->check(CLI::NonNegativeNumber)
            ->capture_default_str();
        sub.add_option("--hist-csv", hist_csv, "Write luma histograms before and after preprocessing");
        sub.add_option("--threads", threads, "Worker threads")->check(CLI::PositiveNumber)->capture_default_str();
    }

    void run(const CLI::App& sub, std::ostream& out_stream) const {
        require_options(sub, {"--in", "--out"});
        std::vector<fs::path> files;
        for (const auto& entry : fs::directory_iterator(in)) {
            if (!entry.is_regular_file()) continue;
            std::string ext = entry.path().extension().string();
            std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
            if (ext == ".png" || ext == ".ppm" || ext == ".pgm") files.push_back(entry.path());
        }
        std::sort(files.begin(), files.end());
        std::set<std::string> stems;
        for (const auto& f : files) {
            if (!stems.insert(f.stem().string()).second) {
                throw std::invalid_argument("two input images share the name '" + f.stem().string() + "'");
            }
        }
        fs::create_directories(out);

        std::vector<Histogram> before(files.size()), after(files.size());
        parallel_for(files.size(), threads, [&](std::size_t i) {
            const Image img = read_image(files[i]);
            Image result = pre.clahe ? clahe(img, {pre.tiles, pre.tiles}, pre.clip) : img;
            if (resize > 0) result = resize_bilinear(result, resize, resize);
            before[i] = intensity_histogram(img);
            after[i] = intensity_histogram(result);
            write_image(fs::path(out) / (files[i].stem().string() + ".png"), result);
        });

        for (const char* name : {"labels.csv", "boxes.csv"}) {
            const fs::path src = fs::path(in) / name;
            // boxes are in source pixel coordinates, so they only carry over at the original size
            if (fs::exists(src) && (resize == 0 || std::string(name) == "labels.csv")) {
                write_file_atomic(fs::path(out) / name, read_file_bytes(src));
            }
        }
        if (!hist_csv.empty()) {
            std::string csv = "level,before,after\n";
            for (int level = 0; level < 256; ++level) {
                std::uint64_t b = 0, a = 0;
                for (std::size_t i = 0; i < files.size(); ++i) {
                    b += before[i].bins[static_cast<std::size_t>(level)];
                    a += after[i].bins[static_cast<std::size_t>(level)];
                }
                csv += std::to_string(level) + "," + std::to_string(b) + "," + std::to_string(a) + "\n";
            }
            write_file_atomic(hist_csv, csv);
        }
        out_stream << "preprocessed " << files.size() << " images into " << out << "\n";
    }
};

struct TrainCommand {
    std::string images, labels, model_config, out, log_csv;
    int classes = kNumGrades, size = 64, epochs = 15, batch_size = 16, threads = default_thread_count();
    double lr = 0.01, momentum = 0.9;
    std::uint64_t seed = 0;
    bool no_flip = false, no_class_weights = false;
    PreprocessingFlags pre;
    NormalizationFlags norm;

    void add_to(CLI::App& sub) {
        sub.add_option("--images", images, "Image directory");
        sub.add_option("--labels", labels, "Labels CSV (id,label)");
        sub.add_option("--model-config", model_config, "Model config file; DeskNet when omitted");
        sub.add_option("--classes", classes, "Grades for the default DeskNet")
            ->check(CLI::PositiveNumber)
            ->capture_default_str();
        sub.add_option("--size", size, "Input side for the default DeskNet")
            ->check(CLI::PositiveNumber)
            ->capture_default_str();
        sub.add_option("--epochs", epochs, "Training epochs")->check(CLI::PositiveNumber)->capture_default_str();
        sub.add_option("--batch-size", batch_size, "Minibatch size")->check(CLI::PositiveNumber)->capture_default_str();
        sub.add_option("--lr", lr, "Learning rate")->check(CLI::PositiveNumber)->capture_default_str();
        sub.add_option("--momentum", momentum, "Momentum in [0, 1)")->check(CLI::Range(0.0, 0.999999))->capture_default_str();
        sub.add_option("--seed", seed, "Seed for initialization, shuffling, augmentation and dropout")
            ->capture_default_str();
        sub.add_flag("--no-flip", no_flip, "Disable random horizontal and vertical flips");
        sub.add_flag("--no-class-weights", no_class_weights, "Use uniform class weights in the loss");
        pre.add_to(sub);
        norm.add_to(sub);
        sub.add_option("--out", out, "Weight file to write");
        sub.add_option("--log-csv", log_csv, "Per-epoch log; defaults to <out>.log.csv");
        sub.add_option("--threads", threads, "Worker threads")->check(CLI::PositiveNumber)->capture_default_str();
    }

    void run(const CLI::App& sub, std::ostream& out_stream) const {
        require_options(sub, {"--images", "--labels", "--out"});
        ModelSidecar settings;
        settings.model = model_config.empty() ? desknet_config(classes, size) : load_model_config(model_config);
        settings.preprocessing = {pre.clahe, {pre.tiles, pre.tiles}, pre.clip, parse_list(norm.mean, "--mean"),
                                  parse_list(norm.stddev, "--stddev")};

        const auto records = load_labeled_dataset(images, labels, settings.model.num_classes);
        std::vector<LabeledImage> data(records.size());
        parallel_for(records.size(), threads, [&](std::size_t i) {
            data[i] = {prepare_image(read_image(records[i].path), settings.model, settings.preprocessing),
                       records[i].label};
        });

        TrainConfig tc;
        tc.epochs = epochs;
        tc.batch_size = batch_size;
        tc.learning_rate = lr;
        tc.momentum = momentum;
        tc.seed = seed;
        tc.flip_horizontal = tc.flip_vertical = !no_flip;
        tc.class_weighting = !no_class_weights;
        tc.mean = settings.preprocessing.mean;
        tc.stddev = settings.preprocessing.stddev;
        tc.threads = threads;

        ModelGraph model = build_model(settings.model, seed);
        out_stream << "training on " << data.size() << " images, " << model.parameter_count() << " parameters\n";
        const TrainResult result = train(model, data, tc, [&](const EpochStats& e) {
            char line[128];
            std::snprintf(line, sizeof line, "epoch %d/%d  loss %.6f  train accuracy %.4f\n", e.epoch, epochs,
                          e.mean_loss, e.train_accuracy);
            out_stream << line << std::flush;
        });

        save_weights(model, out);
        write_file_atomic(sidecar_path(out), format_sidecar(settings));
        write_file_atomic(log_csv.empty() ? out + ".log.csv" : log_csv, epoch_log_csv(result.log));
        out_stream << "wrote " << out << " and " << sidecar_path(out) << "\n";
    }
};

struct EvalCommand {
    std::string images, labels, weights, report, boxes, name;
    int dilate = 4, threads = default_thread_count();

    void add_to(CLI::App& sub) {
        sub.add_option("--images", images, "Image directory");
        sub.add_option("--labels", labels, "Labels CSV (id,label)");
        sub.add_option("--weights", weights, "Weight file written by 'train'");
        sub.add_option("--report", report, "Report path; a .csv extension selects the CSV table");
        sub.add_option("--boxes", boxes, "Lesion boxes CSV; adds the heatmap localisation rate");
        sub.add_option("--dilate", dilate, "Box dilation in pixels for localisation")
            ->check(CLI::NonNegativeNumber)
            ->capture_default_str();
        sub.add_option("--name", name, "Model name in the report; defaults to the weight file stem");
        sub.add_option("--threads", threads, "Worker threads")->check(CLI::PositiveNumber)->capture_default_str();
    }

    void run(const CLI::App& sub, std::ostream& out) const {
        require_options(sub, {"--images", "--labels", "--weights", "--report"});
        const ModelSidecar settings = read_sidecar(weights);
        const ModelGraph model = load_weights(weights, settings.model);
        const int k = settings.model.num_classes;
        auto records = load_labeled_dataset(images, labels, k);
        if (!boxes.empty()) attach_boxes(records, load_boxes_csv(boxes));
        const auto imgs = read_images(records, threads);

        std::vector<std::vector<double>> scores(records.size());
        std::vector<int> labels_vec(records.size());
        std::vector<int> localised(records.size(), -1);  // -1: not counted, 0: miss, 1: hit
        parallel_for(records.size(), threads, [&](std::size_t i) {
            const Tensor x = model_input(imgs[i], settings.model, settings.preprocessing);
            labels_vec[i] = records[i].label;
            if (boxes.empty()) {
                scores[i] = model.forward(x).score_values().values();
                return;
            }
            const Explanation ex = explain(model, x);
            scores[i] = ex.scores.values();
            if (records[i].label > 0 && ex.target_class == records[i].label && !records[i].boxes.empty()) {
                const Heatmap hm = upsample_and_normalize(ex.map, imgs[i].height, imgs[i].width, ex.target_class);
                localised[i] = peak_in_boxes(hm, records[i].boxes, dilate) ? 1 : 0;
            }
        });

        const EvalReport rep = evaluate(scores, labels_vec, k);
        const std::string model_name = name.empty() ? fs::path(weights).stem().string() : name;
        const std::vector<ReportRow> rows{report_row(model_name, rep)};
        std::string text = render_text(rows, class_names(k)) + "\n" + render_confusion(rep.confusion, class_names(k));
        if (!boxes.empty()) {
            const auto hits = std::count(localised.begin(), localised.end(), 1);
            const auto counted = hits + std::count(localised.begin(), localised.end(), 0);
            char line[256];
            std::snprintf(line, sizeof line,
                          "\nlocalisation: %lld of %lld correctly classified lesion images peak inside a box "
                          "dilated by %d px (%.4f)\n",
                          static_cast<long long>(hits), static_cast<long long>(counted), dilate,
                          counted ? static_cast<double>(hits) / static_cast<double>(counted) : 0.0);
            text += line;
        }
        const bool csv = fs::path(report).extension() == ".csv";
        write_file_atomic(report, csv ? render_csv(rows, class_names(k)) : text);
        out << text;
    }
};

struct ExplainCommand {
    std::string image, weights, out;
    int target = -1;
    double blend = 0.4;

    void add_to(CLI::App& sub) {
        sub.add_option("--image", image, "Input image");
        sub.add_option("--weights", weights, "Weight file written by 'train'");
        sub.add_option("--class", target, "Class to explain; -1 selects the highest-scoring class")
            ->check(CLI::Range(-1, 1 << 20))
            ->capture_default_str();
        sub.add_option("--blend", blend, "Heatmap opacity in [0,1]")->check(CLI::Range(0.0, 1.0))->capture_default_str();
        sub.add_option("--out", out, "Overlay PNG, or a directory (trailing '/') for overlay and raw heatmap");
    }

    void run(const CLI::App& sub, std::ostream& out_stream) const {
        require_options(sub, {"--image", "--weights", "--out"});
        const ModelSidecar settings = read_sidecar(weights);
        const ModelGraph model = load_weights(weights, settings.model);
        const int k = settings.model.num_classes;
        if (target >= k) throw UsageError("--class " + std::to_string(target) + " is outside [0, " + std::to_string(k) + ")");
        const Image img = read_image(image);
        const Explanation ex = explain(model, model_input(img, settings.model, settings.preprocessing), target);
        const Heatmap hm = upsample_and_normalize(ex.map, img.height, img.width, ex.target_class);
        const Image blended = overlay(img, hm, blend);

        if (is_directory_target(out)) {
            fs::create_directories(out);
            const std::string stem = fs::path(image).stem().string();
            write_image(fs::path(out) / (stem + "_overlay.png"), blended);
            write_image(fs::path(out) / (stem + "_heatmap.png"), heatmap_image(hm));
        } else {
            write_image(out, blended);
        }
        for (int c = 0; c < k; ++c) {
            char line[128];
            std::snprintf(line, sizeof line, "%-14s %.6f%s\n", class_name(c, k).c_str(), ex.scores[static_cast<std::size_t>(c)],
                          c == ex.target_class ? "  <- explained" : "");
            out_stream << line;
        }
    }
};

}  // namespace

// ---- sidecar ---------------------------------------------------------------------

std::string sidecar_path(const std::string& weights_path) { return weights_path + ".config"; }

std::string format_sidecar(const ModelSidecar& s) {
    std::string out = "# network\n" + format_model_config(s.model);
    const Preprocessing& p = s.preprocessing;
    out += "# preprocessing\n";
    out += "clahe = " + std::string(p.use_clahe ? "true" : "false") + "\n";
    out += "clahe_tile_rows = " + std::to_string(p.tiles.rows) + "\n";
    out += "clahe_tile_cols = " + std::to_string(p.tiles.cols) + "\n";
    out += "clahe_clip = " + format_double(p.clip_factor) + "\n";
    out += "mean = " + format_list(p.mean) + "\n";
    out += "stddev = " + format_list(p.stddev) + "\n";
    return out;
}

ModelSidecar parse_sidecar(const std::string& text) {
    ModelSidecar s;
    std::string model_text;
    for (const auto& [key, value] : parse_key_values(text)) {
        if (key == "clahe") {
            s.preprocessing.use_clahe = parse_bool(value, key);
        } else if (key == "clahe_tile_rows") {
            s.preprocessing.tiles.rows = parse_int(value, key);
        } else if (key == "clahe_tile_cols") {
            s.preprocessing.tiles.cols = parse_int(value, key);
        } else if (key == "clahe_clip") {
            s.preprocessing.clip_factor = parse_double(value, key);
        } else if (key == "mean") {
            s.preprocessing.mean = parse_list(value, key);
        } else if (key == "stddev") {
            s.preprocessing.stddev = parse_list(value, key);
        } else {
            model_text += key + " = " + value + "\n";
        }
    }
    s.model = parse_model_config(model_text);
    return s;
}

// ---- dispatch --------------------------------------------------------------------

int run(const std::vector<std::string>& argv, std::ostream& out, std::ostream& err) {
    CLI::App app("Grad-CAM lesion localisation for retinal fundus grading", "lesionmap");
    app.require_subcommand(1);

    SynthCommand synth;
    StatsCommand stats;
    SplitCommand split;
    PreprocessCommand preprocess;
    TrainCommand train_cmd;
    EvalCommand eval;
    ExplainCommand explain_cmd;

    std::map<const CLI::App*, std::string> config_files;  // node-based, so option bindings stay valid
    auto add = [&](const char* name, const char* description, auto& command) {
        CLI::App* sub = app.add_subcommand(name, description);
        command.add_to(*sub);
        std::string& config = config_files[sub];
        sub->add_option("--config", config, "key = value file; command-line flags take precedence")->configurable(false);
        return sub;
    };
    CLI::App* synth_sub = add("synth", "Generate a synthetic graded dataset with lesion boxes", synth);
    CLI::App* stats_sub = add("stats", "Class distribution of a labels CSV", stats);
    CLI::App* split_sub = add("split", "Stratified train/val/test split of a labels CSV", split);
    CLI::App* pre_sub = add("preprocess", "CLAHE and resize a directory of images", preprocess);
    CLI::App* train_sub = add("train", "Train a network and write its weights", train_cmd);
    CLI::App* eval_sub = add("eval", "Accuracy, per-class AUC and confusion matrix", eval);
    CLI::App* explain_sub = add("explain", "Grad-CAM heatmap overlay for one image", explain_cmd);

    if (argv.size() > 1 && !argv[1].empty() && argv[1][0] != '-' && app.get_subcommand_no_throw(argv[1]) == nullptr) {
        err << "error: unknown subcommand '" << argv[1] << "'\n\n" << app.help();
        return kExitUsage;
    }
    std::vector<const char*> args;
    for (const auto& a : argv) args.push_back(a.c_str());
    try {
        app.parse(static_cast<int>(args.size()), args.data());
    } catch (const CLI::CallForHelp&) {
        out << (app.get_subcommands().empty() ? app.help() : app.get_subcommands().front()->help());
        return kExitOk;
    } catch (const CLI::ParseError& e) {
        const CLI::App* failing = app.get_subcommands().empty() ? &app : app.get_subcommands().front();
        err << "error: " << e.what() << "\n\n" << failing->help();
        return kExitUsage;
    }

    CLI::App* sub = app.get_subcommands().front();
    try {
        if (!config_files[sub].empty()) apply_config_file(*sub, config_files[sub]);
        log_resolved_config(*sub, err);
        if (sub == synth_sub) synth.run(*sub, out);
        if (sub == stats_sub) stats.run(*sub, out);
        if (sub == split_sub) split.run(*sub, out, err);
        if (sub == pre_sub) preprocess.run(*sub, out);
        if (sub == train_sub) train_cmd.run(*sub, out);
        if (sub == eval_sub) eval.run(*sub, out);
        if (sub == explain_sub) explain_cmd.run(*sub, out);
    } catch (const UsageError& e) {
        err << "error: " << e.what() << "\n\n" << sub->help();
        return kExitUsage;
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << "\n\n" << sub->help();
        return kExitUsage;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return kExitFailure;
    }
    return kExitOk;
}

}  // namespace lesionmap::cli

#include "lesionmap/evaluation.hpp"

#include <algorithm>
#include <cstdio>
#include <numeric>
#include <sstream>

namespace lesionmap {

namespace {

void check_pair(const std::vector<int>& predictions, const std::vector<int>& labels) {
    if (predictions.size() != labels.size()) {
        throw std::invalid_argument("predictions (" + std::to_string(predictions.size()) + ") and labels (" +
                                    std::to_string(labels.size()) + ") differ in length");
    }
    if (labels.empty()) throw std::invalid_argument("cannot evaluate an empty set");
}

std::string fixed2(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f", v);
    return buf;
}

}  // namespace

double accuracy(const std::vector<int>& predictions, const std::vector<int>& labels) {
    check_pair(predictions, labels);
    std::size_t hits = 0;
    for (std::size_t i = 0; i < labels.size(); ++i) hits += predictions[i] == labels[i] ? 1 : 0;
    return static_cast<double>(hits) / static_cast<double>(labels.size());
}

ConfusionMatrix confusion_matrix(const std::vector<int>& predictions, const std::vector<int>& labels, int num_classes) {
    if (predictions.size() != labels.size()) throw std::invalid_argument("predictions and labels differ in length");
    if (num_classes < 1) throw std::invalid_argument("num_classes must be positive");
    const auto k = static_cast<std::size_t>(num_classes);
    ConfusionMatrix cm(k, std::vector<std::size_t>(k, 0));
    for (std::size_t i = 0; i < labels.size(); ++i) {
        const int t = labels[i], p = predictions[i];
        if (t < 0 || t >= num_classes || p < 0 || p >= num_classes) {
            throw std::out_of_range("sample " + std::to_string(i) + ": class index outside [0, " +
                                    std::to_string(num_classes) + ")");
        }
        ++cm[static_cast<std::size_t>(t)][static_cast<std::size_t>(p)];
    }
    return cm;
}

double auc_one_vs_rest(const std::vector<double>& scores, const std::vector<int>& labels, int positive_class) {
    if (scores.size() != labels.size()) throw std::invalid_argument("scores and labels differ in length");
    const std::size_t n = scores.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

    // Sum of doubled midranks of the positives (1-based ranks), kept integral.
    std::uint64_t positives = 0, rank2_sum = 0;
    for (std::size_t i = 0; i < n;) {
        std::size_t j = i;
        while (j < n && scores[order[j]] == scores[order[i]]) ++j;
        const std::uint64_t doubled_midrank = (i + 1) + j;  // (i+1 + j) / 2 * 2
        for (std::size_t k = i; k < j; ++k) {
            if (labels[order[k]] == positive_class) {
                ++positives;
                rank2_sum += doubled_midrank;
            }
        }
        i = j;
    }
    const std::uint64_t negatives = n - positives;
    if (positives == 0 || negatives == 0) {
        throw UndefinedAucError("AUC undefined for class " + std::to_string(positive_class) + ": " +
                                (positives == 0 ? "no positive samples" : "no negative samples"));
    }
    // U = R - P(P+1)/2; doubled to stay in integers
    const std::uint64_t u2 = rank2_sum - positives * (positives + 1);
    return static_cast<double>(u2) / (2.0 * static_cast<double>(positives) * static_cast<double>(negatives));
}

EvalReport evaluate(const std::vector<std::vector<double>>& scores, const std::vector<int>& labels, int num_classes) {
    if (scores.size() != labels.size()) throw std::invalid_argument("scores and labels differ in length");
    if (labels.empty()) throw std::invalid_argument("cannot evaluate an empty set");
    const auto k = static_cast<std::size_t>(num_classes);
    std::vector<int> predictions;
    predictions.reserve(scores.size());
    for (const auto& row : scores) {
        if (row.size() != k) throw std::invalid_argument("score row does not have num_classes entries");
        predictions.push_back(static_cast<int>(std::max_element(row.begin(), row.end()) - row.begin()));
    }
    EvalReport report;
    report.samples = labels.size();
    report.confusion = confusion_matrix(predictions, labels, num_classes);
    report.accuracy = accuracy(predictions, labels);
    std::vector<double> column(scores.size());
    for (std::size_t c = 0; c < k; ++c) {
        for (std::size_t i = 0; i < scores.size(); ++i) column[i] = scores[i][c];
        try {
            report.auc.emplace_back(auc_one_vs_rest(column, labels, static_cast<int>(c)));
        } catch (const UndefinedAucError&) {
            report.auc.emplace_back(std::nullopt);
        }
    }
    return report;
}

std::vector<std::string> default_class_names() { return {"Normal", "Mild", "Moderate", "Severe", "Proliferative"}; }

ReportRow report_row(const std::string& name, const EvalReport& report) {
    return {name, report.accuracy, report.auc};
}

std::string format_metrics(const ReportRow& row, const std::string& separator) {
    std::string out = fixed2(100.0 * row.accuracy);
    for (const auto& a : row.auc) out += separator + (a ? fixed2(*a) : "NA");
    return out;
}

std::string render_csv(const std::vector<ReportRow>& rows, const std::vector<std::string>& class_names) {
    std::string out = "model,accuracy";
    for (const auto& name : class_names) out += "," + name;
    out += "\n";
    for (const auto& row : rows) out += row.name + "," + format_metrics(row, ",") + "\n";
    return out;
}

std::string render_text(const std::vector<ReportRow>& rows, const std::vector<std::string>& class_names) {
    std::size_t name_width = 5;
    for (const auto& r : rows) name_width = std::max(name_width, r.name.size());
    std::size_t col = 8;
    for (const auto& c : class_names) col = std::max(col, c.size());

    std::ostringstream out;
    auto pad = [](const std::string& s, std::size_t w) { return s + std::string(w > s.size() ? w - s.size() : 0, ' '); };
    auto rpad = [](const std::string& s, std::size_t w) { return std::string(w > s.size() ? w - s.size() : 0, ' ') + s; };
    out << pad("Model", name_width) << "  " << rpad("Accuracy (%)", 12);
    for (const auto& c : class_names) out << "  " << rpad(c, col);
    out << "\n";
    for (const auto& r : rows) {
        out << pad(r.name, name_width) << "  " << rpad(fixed2(100.0 * r.accuracy), 12);
        for (std::size_t c = 0; c < class_names.size(); ++c) {
            const std::string cell = c < r.auc.size() && r.auc[c] ? fixed2(*r.auc[c]) : "NA";
            out << "  " << rpad(cell, col);
        }
        out << "\n";
    }
    return out.str();
}

std::string render_confusion(const ConfusionMatrix& cm, const std::vector<std::string>& class_names) {
    std::size_t w = 6;
    for (const auto& c : class_names) w = std::max(w, c.size());
    std::ostringstream out;
    auto rpad = [](const std::string& s, std::size_t width) {
        return std::string(width > s.size() ? width - s.size() : 0, ' ') + s;
    };
    auto name = [&](std::size_t i) { return i < class_names.size() ? class_names[i] : std::to_string(i); };
    out << rpad("true\\pred", w);
    for (std::size_t p = 0; p < cm.size(); ++p) out << " " << rpad(name(p), w);
    out << "\n";
    for (std::size_t t = 0; t < cm.size(); ++t) {
        out << rpad(name(t), w);
        for (auto v : cm[t]) out << " " << rpad(std::to_string(v), w);
        out << "\n";
    }
    return out.str();
}

}  // namespace lesionmap

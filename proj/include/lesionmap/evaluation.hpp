#pragma once

#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace lesionmap {

using ConfusionMatrix = std::vector<std::vector<std::size_t>>;

/// Fraction of exact matches; throws on empty or mismatched input.
double accuracy(const std::vector<int>& predictions, const std::vector<int>& labels);

/// cell[t][p] counts samples with label t predicted as p.
ConfusionMatrix confusion_matrix(const std::vector<int>& predictions, const std::vector<int>& labels, int num_classes);

class UndefinedAucError : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

/// One-vs-rest AUC for class `positive_class`: the probability that a random
/// positive outscores a random negative, ties counting one half. Computed
/// from midranks in O(n log n). Throws UndefinedAucError when the class has
/// no positives or no negatives.
double auc_one_vs_rest(const std::vector<double>& scores, const std::vector<int>& labels, int positive_class);

struct EvalReport {
    double accuracy = 0.0;
    std::vector<std::optional<double>> auc;  // per class; empty when undefined
    ConfusionMatrix confusion;
    std::size_t samples = 0;
};

/// `scores[i][c]` is the score of sample i for class c; predictions are the argmax.
EvalReport evaluate(const std::vector<std::vector<double>>& scores, const std::vector<int>& labels, int num_classes);

std::vector<std::string> default_class_names();  // normal, mild, moderate, severe, proliferative

struct ReportRow {
    std::string name;
    double accuracy = 0.0;  // fraction in [0,1]
    std::vector<std::optional<double>> auc;
};

ReportRow report_row(const std::string& name, const EvalReport& report);

/// Accuracy as a percentage then one AUC per class, two decimals each,
/// joined by `separator`. Undefined AUCs render as "NA".
std::string format_metrics(const ReportRow& row, const std::string& separator = ", ");

/// `model,accuracy,<class names...>` header followed by one line per row.
std::string render_csv(const std::vector<ReportRow>& rows, const std::vector<std::string>& class_names);

/// Aligned plain-text table.
std::string render_text(const std::vector<ReportRow>& rows, const std::vector<std::string>& class_names);

/// Confusion matrix as aligned text with true labels on rows.
std::string render_confusion(const ConfusionMatrix& cm, const std::vector<std::string>& class_names);

}  // namespace lesionmap

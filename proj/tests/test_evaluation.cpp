#include <doctest.h>

#include <cmath>

#include "lesionmap/evaluation.hpp"
#include "lesionmap/random.hpp"

using namespace lesionmap;

namespace {

// All (positive, negative) pairs: wins count 1, ties 1/2.
double auc_by_pairs(const std::vector<double>& s, const std::vector<int>& y, int positive) {
    double wins = 0.0;
    std::size_t pairs = 0;
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (y[i] != positive) continue;
        for (std::size_t j = 0; j < s.size(); ++j) {
            if (y[j] == positive) continue;
            ++pairs;
            if (s[i] > s[j]) wins += 1.0;
            else if (s[i] == s[j]) wins += 0.5;
        }
    }
    return wins / static_cast<double>(pairs);
}

}  // namespace

TEST_CASE("accuracy") {
    CHECK(accuracy({0, 1, 2}, {0, 1, 2}) == 1.0);
    CHECK(accuracy({0, 1}, {1, 0}) == 0.0);
    CHECK(accuracy({0, 1, 1, 1}, {0, 1, 0, 0}) == 0.5);
    CHECK_THROWS(accuracy({0}, {0, 1}));
    CHECK_THROWS(accuracy({}, {}));
}

TEST_CASE("confusion matrix") {
    const auto diag = confusion_matrix({0, 1, 2, 2}, {0, 1, 2, 2}, 3);
    CHECK(diag == ConfusionMatrix{{1, 0, 0}, {0, 1, 0}, {0, 0, 2}});
    const auto one = confusion_matrix({4}, {2}, 5);
    for (std::size_t t = 0; t < 5; ++t)
        for (std::size_t p = 0; p < 5; ++p) CHECK(one[t][p] == (t == 2 && p == 4 ? 1u : 0u));
    CHECK_THROWS(confusion_matrix({5}, {0}, 5));
    CHECK_THROWS(confusion_matrix({0}, {-1}, 5));

    Rng rng(1);
    std::vector<int> p(300), y(300);
    for (std::size_t i = 0; i < 300; ++i) p[i] = static_cast<int>(rng.index(5)), y[i] = static_cast<int>(rng.index(5));
    const auto cm = confusion_matrix(p, y, 5);
    std::size_t trace = 0;
    for (std::size_t t = 0; t < 5; ++t) {
        std::size_t row = 0;
        for (auto v : cm[t]) row += v;
        CHECK(row == static_cast<std::size_t>(std::count(y.begin(), y.end(), static_cast<int>(t))));
        trace += cm[t][t];
    }
    CHECK(accuracy(p, y) == static_cast<double>(trace) / 300.0);
}

TEST_CASE("AUC examples") {
    CHECK(auc_one_vs_rest({0.1, 0.4, 0.35, 0.8}, {0, 0, 1, 1}, 1) == 0.75);
    CHECK(auc_one_vs_rest({0.1, 0.2, 0.8, 0.9}, {0, 0, 1, 1}, 1) == 1.0);
    CHECK(auc_one_vs_rest({0.3, 0.3, 0.3, 0.3, 0.3}, {0, 1, 0, 1, 1}, 1) == 0.5);
    CHECK_THROWS_AS(auc_one_vs_rest({0.1, 0.2}, {0, 0}, 1), UndefinedAucError);
    CHECK_THROWS_AS(auc_one_vs_rest({0.1, 0.2}, {1, 1}, 1), UndefinedAucError);
}

TEST_CASE("AUC matches brute-force pair counting") {
    Rng rng(2);
    for (int trial = 0; trial < 300; ++trial) {
        const std::size_t n = 2 + rng.index(120);
        std::vector<double> s(n);
        std::vector<int> y(n);
        const bool coarse = trial % 2 == 0;  // coarse scores force many ties
        for (std::size_t i = 0; i < n; ++i) {
            s[i] = coarse ? static_cast<double>(rng.index(6)) / 5.0 : rng.uniform();
            y[i] = static_cast<int>(rng.index(3));
        }
        y[0] = 1;
        y[1] = 0;
        const double fast = auc_one_vs_rest(s, y, 1);
        CHECK(std::abs(fast - auc_by_pairs(s, y, 1)) <= 1e-12);

        std::vector<double> warped(n);
        for (std::size_t i = 0; i < n; ++i) warped[i] = std::exp(3.0 * s[i]) - 7.0;
        CHECK(auc_one_vs_rest(warped, y, 1) == fast);

        std::vector<int> flipped(n);
        for (std::size_t i = 0; i < n; ++i) flipped[i] = y[i] == 1 ? 0 : 1;
        CHECK(std::abs(auc_one_vs_rest(s, flipped, 1) - (1.0 - fast)) <= 1e-12);
    }
}

TEST_CASE("evaluate predicts by argmax and reports undefined AUCs as absent") {
    const std::vector<std::vector<double>> scores{{0.9, 0.1, 0.2}, {0.2, 0.7, 0.1}, {0.3, 0.6, 0.4}, {0.8, 0.3, 0.1}};
    const EvalReport r = evaluate(scores, {0, 1, 2, 0}, 3);
    CHECK(r.samples == 4);
    CHECK(r.accuracy == 0.75);
    CHECK(r.confusion[2][1] == 1);
    REQUIRE(r.auc.size() == 3);
    CHECK(r.auc[0].has_value());
    CHECK(*r.auc[0] == 1.0);
    const EvalReport missing = evaluate(scores, {0, 1, 1, 0}, 3);
    CHECK_FALSE(missing.auc[2].has_value());
    CHECK(format_metrics(report_row("m", missing)).find("NA") != std::string::npos);
}

TEST_CASE("report formatting") {
    CHECK(format_metrics({"InceptionV3", 0.9607, {0.97, 0.67, 0.84, 0.62, 0.67}}) == "96.07, 0.97, 0.67, 0.84, 0.62, 0.67");
    CHECK(format_metrics({"VGG16", 0.9531, {0.97, 0.64, 0.77, 0.62, 0.78}}) == "95.31, 0.97, 0.64, 0.77, 0.62, 0.78");
    CHECK(format_metrics({"x", 1.0, {2.0 / 3.0}}) == "100.00, 0.67");

    const std::vector<ReportRow> rows{{"VGG16", 0.9531, {0.97, 0.64, 0.77, 0.62, 0.78}}};
    const std::string csv = render_csv(rows, default_class_names());
    CHECK(csv == "model,accuracy,Normal,Mild,Moderate,Severe,Proliferative\nVGG16,95.31,0.97,0.64,0.77,0.62,0.78\n");
    const std::string text = render_text(rows, default_class_names());
    CHECK(text.find("Proliferative") != std::string::npos);
    CHECK(text.find("95.31") != std::string::npos);
    const std::string header = text.substr(0, text.find('\n'));
    int auc_columns = 0;
    for (const auto& name : default_class_names()) auc_columns += header.find(name) != std::string::npos;
    CHECK(auc_columns == 5);
    CHECK(render_confusion(ConfusionMatrix{{2, 0}, {1, 3}}, {"a", "b"}).find("3") != std::string::npos);
}

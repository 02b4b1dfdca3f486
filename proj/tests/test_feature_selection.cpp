#include <gtest/gtest.h>

#include <algorithm>
#include <array>
#include <map>
#include <set>

#include "asdml/feature_selection.hpp"
#include "asdml/io.hpp"
#include "support/paths.hpp"
#include "support/synthetic_cohort.hpp"

using namespace asdml;

namespace {

DesignMatrix prepared(const DataTable& raw) {
    DesignMatrix m = encode(impute(raw, ImputeStrategy::median()));
    return min_max_scale(m, continuous_columns(m)).matrix;
}

DesignMatrix children_matrix(std::uint64_t seed = 1) {
    return prepared(parse_arff(fixtures::synthetic_arff(fixtures::CohortProfile::children(), seed)));
}

double score_of(const FeatureRanking& r, const std::string& name) {
    for (const auto& e : r.entries)
        if (e.name == name) return e.score;
    throw std::runtime_error("missing " + name);
}

// Pearson chi-square of an r x 2 contingency table, computed from raw counts.
double pearson(const std::map<std::string, std::array<double, 2>>& table) {
    double n = 0, col[2] = {0, 0};
    for (const auto& [k, c] : table) {
        col[0] += c[0];
        col[1] += c[1];
    }
    n = col[0] + col[1];
    double chi = 0.0;
    for (const auto& [k, c] : table) {
        const double row = c[0] + c[1];
        for (int j = 0; j < 2; ++j) {
            const double e = row * col[j] / n;
            if (e > 0) chi += (c[j] - e) * (c[j] - e) / e;
        }
    }
    return chi;
}

}  // namespace

TEST(ChiSquare, IndependentFeatureScoresZero) {
    DesignMatrix m;
    m.x = Matrix{{1}, {0}, {1}, {0}};
    m.columns = {{"f", "", AttributeKind::binary}};
    m.y = {0, 0, 1, 1};
    EXPECT_NEAR(chi_square_scores(m).entries[0].score, 0.0, 1e-15);
}

TEST(ChiSquare, TwoByTwoHandComputation) {
    // O = [[10, 0], [0, 10]]: expected 5 in every cell -> 4 * 25 / 5 = 20.
    DesignMatrix m;
    m.x = Matrix(20, 1);
    m.y.assign(20, 0);
    for (std::size_t r = 10; r < 20; ++r) {
        m.x(r, 0) = 1.0;
        m.y[r] = 1;
    }
    m.columns = {{"f", "", AttributeKind::binary}};
    EXPECT_NEAR(chi_square_scores(m).entries[0].score, 20.0, 1e-12);
}

TEST(ChiSquare, AggregatedNominalEqualsContingencyOracle) {
    DataTable raw = impute(parse_arff(fixtures::synthetic_arff(fixtures::CohortProfile::children(), 4)),
                           ImputeStrategy::median());
    FeatureRanking r = chi_square_scores(prepared(raw));
    const std::size_t li = raw.schema.label_index();
    for (const char* name : {"ethnicity", "contry_of_res", "relation", "gender", "A4_Score"}) {
        const std::size_t ai = *raw.schema.index_of(name);
        std::map<std::string, std::array<double, 2>> table;
        for (const auto& row : raw.rows) {
            const int cls = std::get<std::string>(row[li]) == "YES" ? 1 : 0;
            table[std::get<std::string>(row[ai])][cls] += 1.0;
        }
        EXPECT_NEAR(score_of(r, name), pearson(table), 1e-9) << name;
    }
}

TEST(ChiSquare, ScoresNonNegativeAndSortedDescending) {
    Diagnostics diag;
    FeatureRanking r = chi_square_scores(children_matrix(), {}, &diag);
    EXPECT_EQ(r.entries.size(), 20u);
    for (std::size_t i = 0; i < r.entries.size(); ++i) {
        EXPECT_GE(r.entries[i].score, 0.0);
        if (i) {
            EXPECT_GE(r.entries[i - 1].score, r.entries[i].score);
        }
    }
    // age_desc is constant: a single one-hot column equal to 1 everywhere.
    EXPECT_EQ(score_of(r, "age_desc"), 0.0);
}

TEST(ChiSquare, RowPermutationInvariantAndLinearInCounts) {
    DesignMatrix m = children_matrix();
    FeatureRanking base = chi_square_scores(m);
    SeededRng rng(5);
    auto perm = rng_shuffle(rng, m.rows());
    FeatureRanking permuted = chi_square_scores(m.select_rows(perm));
    std::vector<std::size_t> twice;
    for (std::size_t i = 0; i < m.rows(); ++i) twice.push_back(i);
    for (std::size_t i = 0; i < m.rows(); ++i) twice.push_back(i);
    FeatureRanking doubled = chi_square_scores(m.select_rows(twice));
    for (const auto& e : base.entries) {
        EXPECT_NEAR(score_of(permuted, e.name), e.score, 1e-9 * std::max(1.0, e.score));
        EXPECT_NEAR(score_of(doubled, e.name), 2.0 * e.score, 1e-9 * std::max(1.0, e.score));
    }
}

TEST(ChiSquare, RejectsNegativeFeatures) {
    DesignMatrix m;
    m.x = Matrix{{-1}, {1}};
    m.columns = {{"f", "", AttributeKind::continuous}};
    m.y = {0, 1};
    EXPECT_THROW(chi_square_scores(m), InvalidArgument);
}

TEST(ChiSquare, ZeroColumnWarnsAndScoresZero) {
    DesignMatrix m;
    m.x = Matrix{{0}, {0}, {0}};
    m.columns = {{"f", "", AttributeKind::continuous}};
    m.y = {0, 1, 1};
    Diagnostics diag;
    EXPECT_EQ(chi_square_scores(m, {}, &diag).entries[0].score, 0.0);
    EXPECT_TRUE(diag.has("chi2_zero_expected"));
}

TEST(SelectTopK, IdentityNestingAndCardinality) {
    DesignMatrix m = children_matrix();
    FeatureRanking r = chi_square_scores(m);
    DesignMatrix all = select_top_k(m, r, r.entries.size());
    EXPECT_EQ(all.x, m.x);
    EXPECT_EQ(all.columns, m.columns);

    DesignMatrix top10 = select_top_k(m, r, 10);
    EXPECT_EQ(top10.attribute_groups().size(), 10u);
    EXPECT_EQ(r.k_selected, 10u);
    std::set<std::string> prev;
    for (std::size_t k = 1; k <= r.entries.size(); ++k) {
        auto groups = select_top_k(m, r, k).attribute_groups();
        std::set<std::string> cur(groups.begin(), groups.end());
        EXPECT_TRUE(std::includes(cur.begin(), cur.end(), prev.begin(), prev.end()));
        prev = cur;
    }
    // Column order preserved.
    for (std::size_t j = 1; j < top10.columns.size(); ++j) {
        auto pos = [&](const ColumnInfo& c) {
            return std::find(m.columns.begin(), m.columns.end(), c) - m.columns.begin();
        };
        EXPECT_LT(pos(top10.columns[j - 1]), pos(top10.columns[j]));
    }
    EXPECT_THROW(select_top_k(m, r, 0), InvalidArgument);
    EXPECT_THROW(select_top_k(m, r, 21), InvalidArgument);
}

TEST(SelectTopK, PerColumnRankingFlag) {
    DesignMatrix m = children_matrix();
    FeatureRanking r = chi_square_scores(m, {.aggregate_groups = false});
    EXPECT_EQ(r.entries.size(), m.columns.size());
    DesignMatrix top = select_top_k(m, r, 5);
    EXPECT_EQ(top.columns.size(), 5u);
}

TEST(Ranking, CsvExport) {
    FeatureRanking r;
    r.entries = {{"A4_Score", 12.5}, {"contry_of_res", 0.25}};
    EXPECT_EQ(ranking_to_csv(r), "attribute,score\nA4_Score,12.5\ncontry_of_res,0.25\n");
}

TEST(Ranking, UciTopAScores) {
    const auto dir = fixtures::uci_data_dir();
    if (!dataset_available("combined", dir)) GTEST_SKIP() << "UCI ARFF files not in " << dir;
    auto top_a_score = [](const FeatureRanking& r) {
        for (const auto& e : r.entries)
            if (e.name.rfind("A", 0) == 0 && e.name.find("_Score") != std::string::npos) return e.name;
        return std::string();
    };
    EXPECT_EQ(top_a_score(chi_square_scores(prepared(load_dataset("children", dir)))), "A4_Score");
    EXPECT_EQ(top_a_score(chi_square_scores(prepared(load_dataset("adult", dir)))), "A9_Score");
}

#include <gtest/gtest.h>

#include <bit>
#include <set>

#include "asdml/evaluation.hpp"
#include "support/paths.hpp"
#include "support/synthetic_cohort.hpp"

using namespace asdml;

namespace {

DataTable children(std::uint64_t seed = 3) {
    return parse_arff(fixtures::synthetic_arff(fixtures::CohortProfile::children(), seed));
}

/// Data directory holding synthetic children / adult files.
std::filesystem::path synthetic_dir(const std::string& name) {
    auto dir = fixtures::scratch_dir(name);
    write_file(dir / kChildrenFile, fixtures::synthetic_arff(fixtures::CohortProfile::children(), 11));
    write_file(dir / kAdultFile, fixtures::synthetic_arff(fixtures::CohortProfile::adult(), 12));
    return dir;
}

DesignMatrix blobs(std::size_t n, std::uint64_t seed, double sep = 3.0) {
    SeededRng rng(seed);
    DesignMatrix m;
    m.x = Matrix(n, 2);
    for (std::size_t i = 0; i < n; ++i) {
        const int y = int(i % 2);
        m.x(i, 0) = rng.normal() + (y ? sep : 0.0);
        m.x(i, 1) = rng.normal();
        m.y.push_back(y);
    }
    m.columns = {ColumnInfo{"x0", ""}, ColumnInfo{"x1", ""}};
    return m;
}

ModelSpec lr_spec(double c = 1.0) {
    return {ModelKind::logistic_regression, {{"penalty", std::string("l2")}, {"C", c}}, {}};
}

ModelSpec knn_spec(std::int64_t k) {
    return {ModelKind::knn,
            {{"n_neighbors", k}, {"weights", std::string("uniform")}, {"algorithm", std::string("brute")},
             {"leaf_size", std::int64_t{30}}},
            {}};
}

bool same_bits(const Matrix& a, const Matrix& b) {
    if (a.rows() != b.rows() || a.cols() != b.cols()) return false;
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t j = 0; j < a.cols(); ++j)
            if (std::bit_cast<std::uint64_t>(a(i, j)) != std::bit_cast<std::uint64_t>(b(i, j))) return false;
    return true;
}

}  // namespace

// ----------------------------------------------------------------- pipeline

TEST(Pipeline, SelectsTopKAttributes) {
    const auto p = prepare(children(), {});
    EXPECT_EQ(p.selected.attribute_groups().size(), 10u);
    EXPECT_EQ(p.pipeline.feature_names().size(), p.selected.columns.size());
    EXPECT_EQ(p.selected.rows(), 292u);
}

TEST(Pipeline, FrozenTransformReproducesTrainingMatrix) {
    const auto raw = children();
    const auto p = prepare(raw, {});
    const auto again = p.pipeline.transform(raw);
    EXPECT_TRUE(same_bits(again.x, p.selected.x));
    EXPECT_EQ(again.y, p.selected.y);
}

TEST(Pipeline, JsonRoundTripKeepsHashAndTransform) {
    const auto raw = children();
    const auto p = prepare(raw, {});
    const auto back = FrozenPipeline::from_json(nlohmann::json::parse(p.pipeline.to_json().dump()));
    EXPECT_EQ(back.hash(), p.pipeline.hash());
    EXPECT_TRUE(same_bits(back.transform(raw).x, p.selected.x));
}

TEST(Pipeline, HashTracksConfig) {
    const auto raw = children();
    PreprocessConfig c5;
    c5.top_k = 5;
    EXPECT_NE(prepare(raw, {}).pipeline.hash(), prepare(raw, c5).pipeline.hash());
    EXPECT_EQ(prepare(raw, {}).pipeline.hash(), prepare(raw, {}).pipeline.hash());
}

TEST(Pipeline, RowFromFieldsMatchesTableRow) {
    const auto raw = children();
    const auto p = prepare(raw, {});
    // First complete row, rebuilt from named fields.
    std::size_t r = 0;
    while (std::any_of(raw.rows[r].begin(), raw.rows[r].end(), [](const Cell& c) { return is_missing(c); })) ++r;
    std::map<std::string, nlohmann::json> fields;
    for (std::size_t i = 0; i < raw.schema.size(); ++i) {
        const auto& a = raw.schema.attributes[i];
        if (a.is_label) continue;
        fields[a.name] = cell_to_json(raw.rows[r][i]);
        if (a.name == "A1_Score") fields[a.name] = std::stoi(std::get<std::string>(raw.rows[r][i]));
    }
    const auto row = p.pipeline.transform_row(p.pipeline.row_from_fields(fields));
    ASSERT_EQ(row.size(), p.selected.x.cols());
    for (std::size_t j = 0; j < row.size(); ++j) EXPECT_EQ(row[j], p.selected.x(r, j));
}

TEST(Pipeline, AbsentFieldsUseTrainingFill) {
    const auto p = prepare(children(), {});
    const auto blank = p.pipeline.transform_row(p.pipeline.row_from_fields({}));
    auto filled = p.pipeline.fill;
    EXPECT_EQ(blank, p.pipeline.transform_row(filled));
    EXPECT_THROW(p.pipeline.row_from_fields({{"shoe_size", 42}}), InvalidArgument);
    EXPECT_THROW(p.pipeline.row_from_fields({{"age", "old"}}), InvalidArgument);
}

TEST(Pipeline, UnseenCategoryWarns) {
    const auto p = prepare(children(), {});
    Diagnostics d;
    p.pipeline.transform_row(p.pipeline.row_from_fields({{"contry_of_res", "Atlantis"}}), &d);
    EXPECT_FALSE(d.warnings.empty());
}

TEST(Pipeline, DropLeakyRemovesResult) {
    const auto raw = children();
    PreprocessConfig c;
    c.drop_leaky = true;
    const auto p = prepare(raw, c);
    EXPECT_FALSE(p.pipeline.schema.index_of("result").has_value());
    for (const auto& n : p.pipeline.feature_names()) EXPECT_EQ(n.find("result"), std::string::npos);
    EXPECT_TRUE(same_bits(p.pipeline.transform(raw).x, p.selected.x));
}

TEST(Pipeline, DropRowsReportsCount) {
    PreprocessConfig c;
    c.impute = "drop_rows";
    c.drop_max_missing = 0;
    Diagnostics d;
    const auto p = prepare(children(), c, &d);
    EXPECT_GT(p.rows_dropped, 0u);
    EXPECT_EQ(p.selected.rows() + p.rows_dropped, 292u);
    EXPECT_TRUE(d.has("rows_dropped"));
}

TEST(Pipeline, RejectsBadInput) {
    EXPECT_THROW(FrozenPipeline::from_json(nlohmann::json{{"format_version", 9}}), ParseError);
    EXPECT_THROW(FrozenPipeline::from_json(nlohmann::json{{"format_version", 1}}), ParseError);
    PreprocessConfig c;
    c.top_k = 50;
    EXPECT_THROW(prepare(children(), c), InvalidArgument);
}

// -------------------------------------------------------------------- grids

TEST(Grid, Table4Sizes) {
    const std::map<ModelKind, std::size_t> want{
        {ModelKind::naive_bayes, 100}, {ModelKind::knn, 800},           {ModelKind::svm, 400},
        {ModelKind::random_forest, 12000}, {ModelKind::decision_tree, 216}, {ModelKind::gradient_boost, 96},
        {ModelKind::logistic_regression, 14}, {ModelKind::ann, 12}};
    for (auto k : kAllModelKinds) {
        const auto g = table4_grid(k);
        EXPECT_NO_THROW(g.validate());
        EXPECT_EQ(g.size(), want.at(k)) << to_string(k);
    }
    const auto nb = table4_grid(ModelKind::naive_bayes);
    EXPECT_DOUBLE_EQ(nb.point(0).get_double("var_smoothing"), 1.0);
    EXPECT_NEAR(nb.point(99).get_double("var_smoothing"), 1e-9, 1e-24);
}

TEST(Grid, PresetsAreValidAndOnGrid) {
    for (auto k : kAllModelKinds)
        for (std::string d : {"children", "adult", "combined"}) {
            const ModelSpec s{k, table4_preset(k, d), {}};
            EXPECT_NO_THROW(validate_params(s));
            if (k == ModelKind::naive_bayes) continue;  // printed values are rounded
            const auto g = table4_grid(k);
            for (const auto& ax : g.axes) {
                const auto& v = s.params.at(ax.name);
                EXPECT_NE(std::find(ax.values.begin(), ax.values.end(), v), ax.values.end())
                    << to_string(k) << " " << d << " " << ax.name;
            }
        }
    EXPECT_THROW(table4_preset(ModelKind::svm, "teens"), InvalidArgument);
    EXPECT_EQ(table4_preset(ModelKind::svm, "children").describe(), "C=13, kernel=linear, degree=3");
}

TEST(Grid, EnumeratesLastAxisFastest) {
    const ParamGrid g{ModelKind::logistic_regression,
                      {{"penalty", {std::string("l1"), std::string("l2")}}, {"C", {0.1, 1.0, 10.0}}}};
    EXPECT_EQ(g.point(0).describe(), "penalty=l1, C=0.1");
    EXPECT_EQ(g.point(1).describe(), "penalty=l1, C=1.0");
    EXPECT_EQ(g.point(3).describe(), "penalty=l2, C=0.1");
    std::set<std::string> all;
    for (std::size_t i = 0; i < g.size(); ++i) all.insert(g.point(i).describe());
    EXPECT_EQ(all.size(), 6u);
    EXPECT_THROW(g.point(6), InvalidArgument);
    const auto back = nlohmann::json(g).get<ParamGrid>();
    EXPECT_EQ(back.point(4), g.point(4));
}

TEST(Grid, RejectsForeignAxes) {
    ParamGrid g{ModelKind::logistic_regression, {{"penalty", {std::string("l2")}}}};
    EXPECT_THROW(g.validate(), InvalidArgument);  // missing C
    g.axes.push_back({"C", {1.0}});
    g.axes.push_back({"gamma", {1.0}});
    EXPECT_THROW(g.validate(), InvalidArgument);
}

TEST(Grid, EffectiveKeysMergeNoOps) {
    const auto knn = table4_grid(ModelKind::knn);
    std::set<std::string> keys;
    for (std::size_t i = 0; i < knn.size(); ++i) keys.insert(effective_params_key(ModelKind::knn, knn.point(i)));
    EXPECT_EQ(keys.size(), 20u);
    const auto svm = table4_grid(ModelKind::svm);
    keys.clear();
    for (std::size_t i = 0; i < svm.size(); ++i) keys.insert(effective_params_key(ModelKind::svm, svm.point(i)));
    EXPECT_EQ(keys.size(), 130u);
    const auto dt = table4_grid(ModelKind::decision_tree);
    keys.clear();
    for (std::size_t i = 0; i < dt.size(); ++i)
        keys.insert(effective_params_key(ModelKind::decision_tree, dt.point(i)));
    EXPECT_EQ(keys.size(), 192u);  // split 1 == split 2
}

// -------------------------------------------------------------------- folds

TEST(KFold, TenRowsFiveFoldsArePairs) {
    std::vector<int> y{0, 1, 0, 1, 0, 1, 0, 1, 0, 1};
    const auto folds = k_fold_indices(y, 5, SeededRng(1));
    ASSERT_EQ(folds.size(), 5u);
    for (const auto& f : folds) {
        EXPECT_EQ(f.size(), 2u);
        EXPECT_EQ(y[f[0]] + y[f[1]], 1);
    }
}

TEST(KFold, PartitionAndStratification) {
    SeededRng gen(5);
    for (int trial = 0; trial < 30; ++trial) {
        const std::size_t n = 20 + gen.uniform_int(700);
        const std::size_t k = 2 + gen.uniform_int(9);
        std::vector<int> y(n);
        for (auto& v : y) v = gen.uniform() < 0.27 ? 1 : 0;
        const auto folds = k_fold_indices(y, k, gen.split(trial));
        std::vector<int> seen(n, 0);
        std::size_t lo = n, hi = 0;
        const double pos = double(std::count(y.begin(), y.end(), 1));
        for (const auto& f : folds) {
            lo = std::min(lo, f.size());
            hi = std::max(hi, f.size());
            EXPECT_TRUE(std::is_sorted(f.begin(), f.end()));
            double fp = 0;
            for (auto i : f) {
                ++seen[i];
                fp += y[i];
            }
            EXPECT_LE(std::abs(fp - pos * double(f.size()) / double(n)), 1.0 + 1e-9);
        }
        EXPECT_LE(hi - lo, 1u);
        EXPECT_TRUE(std::all_of(seen.begin(), seen.end(), [](int c) { return c == 1; }));
    }
}

TEST(KFold, DeterministicAndValidated) {
    std::vector<int> y(30);
    for (std::size_t i = 0; i < y.size(); ++i) y[i] = int(i % 3 == 0);
    EXPECT_EQ(k_fold_indices(y, 5, SeededRng(9)), k_fold_indices(y, 5, SeededRng(9)));
    EXPECT_NE(k_fold_indices(y, 5, SeededRng(9)), k_fold_indices(y, 5, SeededRng(10)));
    EXPECT_THROW(k_fold_indices(y, 1, SeededRng(1)), InvalidArgument);
    EXPECT_THROW(k_fold_indices(y, 31, SeededRng(1)), InvalidArgument);
}

// -------------------------------------------------------- cross-validation

TEST(CrossValidate, FoldCountAndAggregates) {
    const auto m = blobs(60, 2);
    const auto s = cross_validate(lr_spec(), m, 5, SeededRng(4));
    ASSERT_EQ(s.folds.size(), 5u);
    double sum = 0, sq = 0;
    for (const auto& f : s.folds) sum += f.accuracy;
    const double mu = sum / 5;
    for (const auto& f : s.folds) sq += (f.accuracy - mu) * (f.accuracy - mu);
    EXPECT_DOUBLE_EQ(s.mean("accuracy"), mu);
    EXPECT_DOUBLE_EQ(s.std("accuracy"), std::sqrt(sq / 5));
    const auto j = nlohmann::json(s);
    EXPECT_EQ(j["folds"].size(), 5u);
    EXPECT_DOUBLE_EQ(j["mean"]["accuracy"].get<double>(), mu);
}

TEST(CrossValidate, LeaveOneOutMatchesDirectEvaluation) {
    const auto m = blobs(10, 7, 1.5);
    const SeededRng rng(21);
    const auto s = cross_validate(lr_spec(), m, 10, rng);
    const auto folds = k_fold_indices(m.y, 10, rng.split(0));
    double correct = 0;
    for (std::size_t f = 0; f < 10; ++f) {
        const std::size_t held = folds[f][0];
        std::vector<std::size_t> rest;
        for (std::size_t i = 0; i < 10; ++i)
            if (i != held) rest.push_back(i);
        const auto model = train_model(lr_spec(), m.select_rows(rest), rng.split(1 + f));
        const std::size_t one[] = {held};
        const double p = predict_proba1(model, m.x.select_rows(one))[0];
        EXPECT_EQ(s.folds[f].accuracy, double((p >= 0.5) == (m.y[held] == 1)));
        correct += (p >= 0.5) == (m.y[held] == 1);
    }
    EXPECT_DOUBLE_EQ(s.mean("accuracy"), correct / 10);
}

TEST(CrossValidate, MajorityVoterScoresMajorityFraction) {
    // 24 of 40 rows positive; kNN with k = |train| votes the training majority.
    DesignMatrix m = blobs(40, 3);
    for (std::size_t i = 0; i < 40; ++i) m.y[i] = i < 24 ? 1 : 0;
    const auto s = cross_validate(knn_spec(32), m, 5, SeededRng(2));
    const auto folds = k_fold_indices(m.y, 5, SeededRng(2).split(0));
    for (std::size_t f = 0; f < 5; ++f) {
        double pos = 0;
        for (auto i : folds[f]) pos += m.y[i];
        EXPECT_DOUBLE_EQ(s.folds[f].accuracy, pos / double(folds[f].size()));
        EXPECT_NEAR(s.folds[f].accuracy, 0.6, 1.0 / double(folds[f].size()));
    }
}

TEST(CrossValidate, ErrorsNameTheFold) {
    const auto m = blobs(20, 3);
    try {
        cross_validate(knn_spec(17), m, 5, SeededRng(2));
        FAIL();
    } catch (const InvalidArgument& e) {
        EXPECT_NE(std::string(e.what()).find("fold 0"), std::string::npos);
    }
}

// -------------------------------------------------------------- grid search

TEST(GridSearch, SinglePointIsBest) {
    const auto m = blobs(40, 1);
    const ParamGrid g{ModelKind::logistic_regression, {{"penalty", {std::string("l2")}}, {"C", {1.0}}}};
    const auto r = grid_search(g, m, 4, "accuracy", SeededRng(1));
    EXPECT_EQ(r.best, g.point(0));
    EXPECT_EQ(r.table.size(), 1u);
}

TEST(GridSearch, BestIsArgmaxWithEarliestTie) {
    const auto m = blobs(80, 4, 1.2);
    const auto g = table4_grid(ModelKind::logistic_regression);
    const auto r = grid_search(g, m, 5, "accuracy", SeededRng(8));
    ASSERT_EQ(r.table.size(), 14u);
    for (std::size_t i = 0; i < r.table.size(); ++i) {
        EXPECT_LE(r.table[i].mean, r.best_score);
        if (i < r.best_index) {
            EXPECT_LT(r.table[i].mean, r.best_score);
        }
    }
    EXPECT_EQ(r.best_score, r.table[r.best_index].mean);
    // Consistency: re-running CV at the chosen point gives the table score.
    const auto cv = cross_validate({ModelKind::logistic_regression, r.best, {}}, m, 5, SeededRng(8));
    EXPECT_EQ(cv.mean("accuracy"), r.best_score);
}

TEST(GridSearch, LogLossIsMinimised) {
    const auto m = blobs(60, 4, 1.0);
    const ParamGrid g{ModelKind::logistic_regression, {{"penalty", {std::string("l2")}}, {"C", {0.001, 1.0, 1000.0}}}};
    const auto r = grid_search(g, m, 3, "log_loss", SeededRng(3));
    for (const auto& row : r.table) EXPECT_GE(row.mean, r.best_score);
    EXPECT_THROW(grid_search(g, m, 3, "speed", SeededRng(3)), InvalidArgument);
}

TEST(GridSearch, SkipsFailuresAndReusesEquivalentPoints) {
    const auto m = blobs(30, 6);
    const ParamGrid g{ModelKind::knn,
                      {{"n_neighbors", {std::int64_t{1000}, std::int64_t{3}}},
                       {"weights", {std::string("uniform")}},
                       {"algorithm", {std::string("auto"), std::string("brute")}},
                       {"leaf_size", {std::int64_t{1}, std::int64_t{2}}}}};
    Diagnostics d;
    const auto r = grid_search(g, m, 3, "accuracy", SeededRng(1), {}, &d);
    EXPECT_EQ(r.distinct, 2u);
    EXPECT_TRUE(std::isnan(r.table[0].mean));
    EXPECT_FALSE(r.table[0].error.empty());
    EXPECT_EQ(r.best_index, 4u);
    EXPECT_TRUE(r.table[5].reused);
    EXPECT_EQ(r.table[5].mean, r.table[4].mean);
    EXPECT_TRUE(d.has("grid_point_failed"));
    const auto csv = grid_result_csv(r);
    EXPECT_NE(csv.find("0,1000,uniform,auto,1,nan,nan,failed"), std::string::npos);

    const ParamGrid bad{ModelKind::knn,
                        {{"n_neighbors", {std::int64_t{1000}}}, {"weights", {std::string("uniform")}},
                         {"algorithm", {std::string("auto")}}, {"leaf_size", {std::int64_t{1}}}}};
    EXPECT_THROW(grid_search(bad, m, 3, "accuracy", SeededRng(1)), Error);
}

// -------------------------------------------------------------- experiments

namespace {

ExperimentManifest lr_manifest() {
    ExperimentManifest m;
    m.dataset = "children";
    m.model = {ModelKind::logistic_regression, table4_preset(ModelKind::logistic_regression, "children"), {}};
    return m;
}

}  // namespace

TEST(Experiment, ManifestRoundTrip) {
    auto m = lr_manifest();
    m.grid = table4_grid(ModelKind::logistic_regression);
    m.grid_search = true;
    m.objective = "f1";
    const nlohmann::json j = m;
    const auto back = j.get<ExperimentManifest>();
    EXPECT_EQ(nlohmann::json(back).dump(), j.dump());
    EXPECT_EQ(manifest_hash(nlohmann::json(back)), manifest_hash(j));
}

TEST(Experiment, RunsAndWritesByteIdenticalArtifacts) {
    const auto dir = synthetic_dir("exp_data");
    const auto r1 = run_experiment(lr_manifest(), dir);
    const auto r2 = run_experiment(lr_manifest(), dir);
    EXPECT_EQ(r1.report.dump(), r2.report.dump());
    const auto out1 = fixtures::scratch_dir("exp_out1"), out2 = fixtures::scratch_dir("exp_out2");
    write_experiment(r1, out1);
    write_experiment(r2, out2);
    for (auto f : {"manifest.json", "pipeline.json", "ranking.csv", "model.json", "report.json", "report.md",
                   "report.csv", "predictions.csv"})
        EXPECT_EQ(read_file(out1 / f), read_file(out2 / f)) << f;

    EXPECT_EQ(r1.split.test.size(), 87u);  // floor(292 * 0.3)
    EXPECT_EQ(r1.report["rows"]["train"].get<std::size_t>(), 205u);
    EXPECT_EQ(r1.report["cv"]["folds"].size(), 5u);
    EXPECT_EQ(r1.report["pipeline_hash"].get<std::string>(), r1.data.pipeline.hash());
    EXPECT_EQ(r1.model.pipeline_hash, r1.data.pipeline.hash());
    EXPECT_EQ(r1.report["test"]["accuracy"].get<double>(), r1.test.accuracy);
    // The synthetic label is a threshold on `result`, which the pipeline keeps.
    EXPECT_GE(r1.test.accuracy, 0.95);

    // The resolved manifest reruns to the same report.
    const auto resolved = nlohmann::json::parse(read_file(out1 / "manifest.json")).get<ExperimentManifest>();
    EXPECT_EQ(run_experiment(resolved, dir).report.dump(), r1.report.dump());

    auto other = lr_manifest();
    other.seed = 7;
    EXPECT_NE(run_experiment(other, dir).manifest_hash, r1.manifest_hash);
}

TEST(Experiment, PredictionsMatchReloadedArtifacts) {
    const auto dir = synthetic_dir("exp_reload");
    const auto r = run_experiment(lr_manifest(), dir);
    const auto out = fixtures::scratch_dir("exp_reload_out");
    write_experiment(r, out);
    const auto model = model_from_json(nlohmann::json::parse(read_file(out / "model.json")));
    const auto pipe = FrozenPipeline::from_json(nlohmann::json::parse(read_file(out / "pipeline.json")));
    const auto x = pipe.transform(load_dataset("children", dir)).x.select_rows(r.split.test);
    const auto p = predict_proba1(model, x);
    for (std::size_t i = 0; i < p.size(); ++i) EXPECT_EQ(p[i], r.test_proba[i]);
}

TEST(Experiment, GridSearchFeedsChosenPoint) {
    const auto dir = synthetic_dir("exp_grid");
    auto m = lr_manifest();
    m.grid_search = true;
    m.grid = ParamGrid{ModelKind::logistic_regression,
                       {{"penalty", {std::string("l2")}}, {"C", {0.001, 0.1, 10.0}}}};
    const auto r = run_experiment(m, dir);
    ASSERT_TRUE(r.search && r.cv);
    EXPECT_EQ(r.manifest.model.params, r.search->best);
    EXPECT_EQ(r.manifest.params_source, "grid");
    EXPECT_EQ(r.cv->mean("accuracy"), r.search->best_score);
    const auto out = fixtures::scratch_dir("exp_grid_out");
    write_experiment(r, out);
    EXPECT_TRUE(std::filesystem::exists(out / "grid.csv"));
}

TEST(Experiment, StageTaggedErrors) {
    const auto empty = fixtures::scratch_dir("exp_missing");
    try {
        run_experiment(lr_manifest(), empty);
        FAIL();
    } catch (const StageError& e) {
        EXPECT_EQ(e.stage(), "load");
    }
    const auto dir = synthetic_dir("exp_bad");
    auto m = lr_manifest();
    m.model.params = {{"penalty", std::string("l2")}};
    try {
        run_experiment(m, dir);
        FAIL();
    } catch (const StageError& e) {
        EXPECT_EQ(e.stage(), "manifest");
    }
    m = lr_manifest();
    m.preprocess.top_k = 99;
    try {
        run_experiment(m, dir);
        FAIL();
    } catch (const StageError& e) {
        EXPECT_EQ(e.stage(), "preprocess");
    }
    m = lr_manifest();
    m.test_fraction = 1.5;
    EXPECT_THROW(run_experiment(m, dir), StageError);
}

TEST(Experiment, SkipsCrossValidationWhenFoldsZero) {
    const auto dir = synthetic_dir("exp_nocv");
    auto m = lr_manifest();
    m.cv_folds = 0;
    const auto r = run_experiment(m, dir);
    EXPECT_FALSE(r.cv.has_value());
    EXPECT_TRUE(r.report["cv"].is_null());
}

// --------------------------------------------------------------- clustering

TEST(ClusterExperiment, FiveAlgorithmsDeterministic) {
    const auto dir = synthetic_dir("clu_data");
    ClusterManifest m;
    m.seeds = 2;
    const auto r1 = run_clustering_experiment(m, dir);
    ASSERT_EQ(r1.rows.size(), 5u);
    for (const auto& row : r1.rows) {
        EXPECT_EQ(row.assignment.labels.size(), 292u);
        EXPECT_GE(row.scores.nmi, 0.0);
        EXPECT_LE(row.scores.nmi, 1.0);
    }
    EXPECT_EQ(run_clustering_experiment(m, dir).report.dump(), r1.report.dump());
    const auto out = fixtures::scratch_dir("clu_out");
    write_clustering(r1, out);
    EXPECT_TRUE(std::filesystem::exists(out / "assignments" / "spectral.csv"));
    EXPECT_EQ(read_file(out / "report.md").substr(0, std::string(cluster_markdown_header()).size()),
              cluster_markdown_header());
}

TEST(ClusterExperiment, SeedSelectionByNmiIsBestOfRuns) {
    const auto dir = synthetic_dir("clu_best");
    ClusterManifest m;
    m.algorithms = {"kmeans"};
    m.cluster.kmeans_n_init = 1;
    m.seeds = 5;
    const auto best = run_clustering_experiment(m, dir);
    m.seeds = 1;
    const auto one = run_clustering_experiment(m, dir);
    EXPECT_GE(best.rows[0].scores.nmi, one.rows[0].scores.nmi);
    m.seed_selection = "objective";
    m.seeds = 5;
    EXPECT_NO_THROW(run_clustering_experiment(m, dir));
    m.seed_selection = "luck";
    EXPECT_THROW(run_clustering_experiment(m, dir), StageError);
}

TEST(ClusterExperiment, DegenerateFourRowInputIsWellDefined) {
    // Header plus two positive and two negative rows of a synthetic cohort.
    const auto text = fixtures::synthetic_arff(fixtures::CohortProfile::children(), 5);
    const auto data_at = text.find("@data\n") + 6;
    std::string out = text.substr(0, data_at);
    int yes = 0, no = 0;
    std::size_t pos = data_at;
    while (pos < text.size() && (yes < 2 || no < 2)) {
        const auto end = text.find('\n', pos);
        const auto line = text.substr(pos, end - pos);
        pos = end + 1;
        if (line.find('?') != std::string::npos) continue;
        const bool positive = line.ends_with("YES");
        if (positive && yes < 2) ++yes, out += line + "\n";
        if (!positive && no < 2) ++no, out += line + "\n";
    }
    const auto dir = fixtures::scratch_dir("clu_tiny");
    write_file(dir / "tiny.arff", out);
    ClusterManifest m;
    m.dataset = (dir / "tiny.arff").string();
    m.seeds = 3;
    m.cluster.spectral_n_neighbors = 2;
    const auto r = run_clustering_experiment(m, dir);
    ASSERT_EQ(r.rows.size(), 5u);
    for (const auto& row : r.rows) {
        EXPECT_TRUE(std::isfinite(row.scores.nmi));
        EXPECT_TRUE(std::isfinite(row.scores.ari));
        EXPECT_TRUE(std::isfinite(row.scores.silhouette));
    }
}

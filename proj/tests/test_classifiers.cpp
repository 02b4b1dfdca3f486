#include <gtest/gtest.h>

#include <cmath>

#include "asdml/classifiers.hpp"

using namespace asdml;

namespace {

struct Data {
    Matrix x;
    std::vector<int> y;
};

// Two Gaussian blobs in d dimensions, centres at -sep/2 and +sep/2 on every axis.
Data blobs(std::size_t n, std::size_t d, double sep, std::uint64_t seed, double flip = 0.0) {
    SeededRng rng(seed);
    Data out{Matrix(n, d), std::vector<int>(n)};
    for (std::size_t i = 0; i < n; ++i) {
        const int cls = i % 2 == 0 ? 1 : 0;
        for (std::size_t j = 0; j < d; ++j) out.x(i, j) = (cls ? sep / 2 : -sep / 2) + rng.normal();
        out.y[i] = rng.uniform() < flip ? 1 - cls : cls;
    }
    return out;
}

Matrix random_matrix(std::size_t n, std::size_t d, std::uint64_t seed, double scale = 3.0) {
    SeededRng rng(seed);
    Matrix m(n, d);
    for (auto& v : m.data()) v = scale * (2 * rng.uniform() - 1);
    return m;
}

double accuracy(const std::vector<int>& a, const std::vector<int>& b) {
    double s = 0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] == b[i];
    return s / double(a.size());
}

ModelSettings small_ann_settings() {
    ModelSettings s;
    s.ann_hidden = {32, 16, 16};
    s.ann_epochs = 50;
    return s;
}

// One representative spec per kind, cheap enough for unit tests.
std::vector<ModelSpec> cheap_specs() {
    return {
        {ModelKind::naive_bayes, {{"var_smoothing", 1e-9}}, {}},
        {ModelKind::knn, {{"n_neighbors", std::int64_t(3)}, {"weights", "distance"}, {"algorithm", "brute"},
                          {"leaf_size", std::int64_t(30)}}, {}},
        {ModelKind::svm, {{"C", 1.0}, {"kernel", "rbf"}, {"degree", std::int64_t(3)}}, {}},
        {ModelKind::decision_tree, {{"criterion", "gini"}, {"max_depth", std::int64_t(5)},
                                    {"min_samples_split", std::int64_t(2)}, {"min_samples_leaf", std::int64_t(1)}}, {}},
        {ModelKind::random_forest, {{"n_estimators", std::int64_t(15)}, {"max_features", "sqrt"},
                                    {"max_depth", std::int64_t(10)}, {"min_samples_split", std::int64_t(2)},
                                    {"min_samples_leaf", std::int64_t(1)}, {"criterion", "entropy"}}, {}},
        {ModelKind::gradient_boost, {{"max_depth", std::int64_t(3)}, {"n_estimators", std::int64_t(20)},
                                     {"learning_rate", 0.1}}, {}},
        {ModelKind::logistic_regression, {{"penalty", "l2"}, {"C", 10.0}}, {}},
        {ModelKind::ann, {{"optimizer", "adam"}, {"loss", "binary_crossentropy"}, {"batch_size", std::int64_t(16)},
                          {"factor", 0.8}, {"patience", std::int64_t(10)}}, small_ann_settings()},
    };
}

double relative_error(double a, double b) {
    return std::abs(a - b) / std::max({1e-8, std::abs(a), std::abs(b)});
}

}  // namespace

// ---------------------------------------------------------------- contract

TEST(Contract, ProbabilitiesThresholdAndSerialization) {
    const Data train = blobs(80, 3, 2.0, 1, 0.1);
    const Matrix probe = random_matrix(1000, 3, 2);
    for (const auto& spec : cheap_specs()) {
        SCOPED_TRACE(to_string(spec.kind));
        const auto model = train_model(spec, train.x, train.y, SeededRng(3));
        const auto p = predict_proba1(model, probe);
        const auto labels = predict(model, probe);
        const Matrix pm = predict_proba(model, probe);
        for (std::size_t i = 0; i < p.size(); ++i) {
            ASSERT_GE(p[i], 1e-15);
            ASSERT_LE(p[i], 1 - 1e-15);
            ASSERT_NEAR(pm(i, 0) + pm(i, 1), 1.0, 1e-9);
            ASSERT_EQ(labels[i], p[i] >= 0.5 ? 1 : 0);
        }
        const auto restored = model_from_json(nlohmann::json::parse(model_to_json(model).dump()));
        EXPECT_EQ(predict_proba1(restored, probe), p);
        EXPECT_EQ(model_to_json(restored).dump(), model_to_json(model).dump());
        EXPECT_THROW(predict(model, random_matrix(2, 4, 1)), InvalidArgument);
    }
}

TEST(Contract, DeterministicGivenSeed) {
    const Data train = blobs(60, 3, 1.5, 4, 0.1);
    const Matrix probe = random_matrix(200, 3, 5);
    for (const auto& spec : cheap_specs()) {
        SCOPED_TRACE(to_string(spec.kind));
        const auto a = train_model(spec, train.x, train.y, SeededRng(9));
        const auto b = train_model(spec, train.x, train.y, SeededRng(9));
        EXPECT_EQ(predict_proba1(a, probe), predict_proba1(b, probe));
    }
}

TEST(Contract, RowPermutationInvariance) {
    const Data train = blobs(60, 3, 2.5, 6, 0.05);
    SeededRng rng(7);
    const auto perm = rng_shuffle(rng, train.x.rows());
    std::vector<int> y_perm;
    for (auto i : perm) y_perm.push_back(train.y[i]);
    const Matrix x_perm = train.x.select_rows(perm);
    const Matrix probe = random_matrix(300, 3, 8);
    for (const auto& spec : cheap_specs()) {
        if (spec.kind == ModelKind::random_forest || spec.kind == ModelKind::gradient_boost ||
            spec.kind == ModelKind::ann)
            continue;  // bootstrap / batch order depend on row order
        SCOPED_TRACE(to_string(spec.kind));
        const auto a = predict(train_model(spec, train.x, train.y, SeededRng(1)), probe);
        const auto b = predict(train_model(spec, x_perm, y_perm, SeededRng(1)), probe);
        if (spec.kind == ModelKind::svm || spec.kind == ModelKind::logistic_regression)
            EXPECT_GE(accuracy(a, b), 0.99);  // iterative solvers: equal up to solver tolerance
        else
            EXPECT_EQ(a, b);
    }
}

TEST(Contract, ParamValidation) {
    ModelSpec spec{ModelKind::logistic_regression, {{"penalty", "l2"}}, {}};
    const Data d = blobs(10, 2, 3, 1);
    EXPECT_THROW(train_model(spec, d.x, d.y, SeededRng(1)), InvalidArgument);
    spec.params.set("C", 1.0);
    spec.params.set("gamma", 1.0);
    EXPECT_THROW(train_model(spec, d.x, d.y, SeededRng(1)), InvalidArgument);
    ModelSpec knn{ModelKind::knn, {{"n_neighbors", std::int64_t(3)}, {"weights", "uniform"},
                                   {"algorithm", "octree"}, {"leaf_size", std::int64_t(3)}}, {}};
    EXPECT_THROW(train_model(knn, d.x, d.y, SeededRng(1)), InvalidArgument);
    std::vector<int> one_class(10, 1);
    spec.params = {{"penalty", "l2"}, {"C", 1.0}};
    EXPECT_THROW(train_model(spec, d.x, one_class, SeededRng(1)), InvalidArgument);
}

TEST(Contract, ParamPointJsonKeepsOrderAndTypes) {
    ParamPoint p{{"n_estimators", std::int64_t(800)}, {"max_features", "log2"}, {"learning_rate", 0.1}};
    nlohmann::json j = p;
    EXPECT_EQ(j.dump(), R"([["n_estimators",800],["max_features","log2"],["learning_rate",0.1]])");
    EXPECT_EQ(j.get<ParamPoint>(), p);
    EXPECT_EQ(p.describe(), "n_estimators=800, max_features=log2, learning_rate=0.1");
}

// ------------------------------------------------------------- naive Bayes

TEST(NaiveBayes, SeparatedCloudsAndSymmetry) {
    Matrix x(20, 1);
    std::vector<int> y(20);
    for (std::size_t i = 0; i < 20; ++i) {
        y[i] = i < 10 ? 0 : 1;
        x(i, 0) = (i < 10 ? -5.0 : 5.0) + 0.1 * double(i % 10);
    }
    auto m = train_naive_bayes(x, y, 1e-9);
    std::vector<int> pred;
    for (double p : m.proba1(x)) pred.push_back(p >= 0.5);
    EXPECT_EQ(pred, y);

    // Mirror-symmetric classes: the midpoint gets 0.5 / 0.5.
    Matrix s{{-2}, {-1}, {1}, {2}};
    std::vector<int> ys{0, 0, 1, 1};
    auto sym = train_naive_bayes(s, ys, 0.0);
    EXPECT_NEAR(sym.proba1(Matrix{{0.0}})[0], 0.5, 1e-12);
}

TEST(NaiveBayes, MatchesHandPosterior) {
    Matrix x{{1.0, 0.0}, {2.0, 1.0}, {3.0, 0.0}, {6.0, 1.0}, {7.0, 1.0}};
    std::vector<int> y{0, 0, 0, 1, 1};
    const double smoothing = 0.1;
    auto m = train_naive_bayes(x, y, smoothing);
    // Oracle from first principles.
    auto pvar = [](std::vector<double> v) {
        double mu = 0;
        for (double a : v) mu += a;
        mu /= double(v.size());
        double s = 0;
        for (double a : v) s += (a - mu) * (a - mu);
        return std::pair{mu, s / double(v.size())};
    };
    const double eps = smoothing * std::max(pvar({1, 2, 3, 6, 7}).second, pvar({0, 1, 0, 1, 1}).second);
    auto loglik = [&](double q0, double q1, std::vector<double> c0, std::vector<double> c1, double prior) {
        auto [m0, v0] = pvar(c0);
        auto [m1, v1] = pvar(c1);
        v0 += eps;
        v1 += eps;
        const double pi = 3.14159265358979323846;
        return std::log(prior) - 0.5 * std::log(2 * pi * v0) - (q0 - m0) * (q0 - m0) / (2 * v0) -
               0.5 * std::log(2 * pi * v1) - (q1 - m1) * (q1 - m1) / (2 * v1);
    };
    const double q0 = 4.0, q1 = 0.5;
    const double l0 = loglik(q0, q1, {1, 2, 3}, {0, 1, 0}, 0.6);
    const double l1 = loglik(q0, q1, {6, 7}, {1, 1}, 0.4);
    EXPECT_NEAR(m.proba1(Matrix{{q0, q1}})[0], 1.0 / (1.0 + std::exp(l0 - l1)), 1e-12);
    EXPECT_THROW(train_naive_bayes(x, y, -1.0), InvalidArgument);
}

// --------------------------------------------------------------------- KNN

TEST(Knn, MemorizesAndVotes) {
    const Data d = blobs(30, 2, 1.0, 11);
    auto m = train_knn(d.x, d.y, 1, KnnWeights::uniform);
    std::vector<int> pred;
    for (double p : m.proba1(d.x)) pred.push_back(p >= 0.5);
    EXPECT_EQ(pred, d.y);

    Matrix x{{0.0}, {1.0}, {2.0}};
    std::vector<int> y{1, 1, 0};
    auto three = train_knn(x, y, 3, KnnWeights::uniform);
    EXPECT_NEAR(three.proba1(Matrix{{10.0}})[0], 2.0 / 3.0, 1e-15);
    // Distance weighting: an exact match takes all the weight.
    auto weighted = train_knn(x, y, 3, KnnWeights::distance);
    EXPECT_EQ(weighted.proba1(Matrix{{2.0}})[0], 0.0);
    // 1/d weights at x=1.5: d = 1.5, 0.5, 0.5.
    const double w0 = 1 / 1.5, w1 = 1 / 0.5, w2 = 1 / 0.5;
    EXPECT_NEAR(weighted.proba1(Matrix{{1.5}})[0], (w0 + w1) / (w0 + w1 + w2), 1e-15);
    EXPECT_THROW(train_knn(x, y, 4, KnnWeights::uniform), InvalidArgument);
}

TEST(Knn, LeafSizeAndAlgorithmAreNoOps) {
    const Data d = blobs(40, 3, 1.0, 12);
    const Matrix probe = random_matrix(100, 3, 13);
    std::vector<double> first;
    for (std::int64_t leaf : {1, 112, 445}) {
        for (const char* algo : {"auto", "ball_tree", "kd_tree", "brute"}) {
            ModelSpec spec{ModelKind::knn, {{"n_neighbors", std::int64_t(5)}, {"weights", "uniform"},
                                            {"algorithm", algo}, {"leaf_size", leaf}}, {}};
            auto p = predict_proba1(train_model(spec, d.x, d.y, SeededRng(1)), probe);
            if (first.empty()) first = p;
            EXPECT_EQ(p, first);
        }
    }
}

// --------------------------------------------------------------------- SVM

TEST(Svm, SeparableFourPointsReachAnalyticMargin) {
    // Separator x1 + x2 = 0; the closest points (1,1), (-1,-1) give margin sqrt(2).
    Matrix x{{1, 1}, {2, 3}, {-1, -1}, {-3, -2}};
    std::vector<int> y{1, 1, 0, 0};
    auto m = train_svm(x, y, 1000.0, KernelKind::linear, 3);
    const auto f = m.decision_function(x);
    const auto w = m.linear_weights();
    const double norm = std::sqrt(dot(w, w));
    double margin = 1e300;
    for (std::size_t i = 0; i < 4; ++i) {
        EXPECT_EQ(f[i] > 0, y[i] == 1);
        margin = std::min(margin, (y[i] ? 1 : -1) * f[i] / norm);
    }
    EXPECT_GE(margin, std::sqrt(2.0) * (1 - 1e-3));
    EXPECT_NEAR(w[0], 0.5, 1e-3);
    EXPECT_NEAR(w[1], 0.5, 1e-3);
}

TEST(Svm, KktConditionsHoldAtSolution) {
    const Data d = blobs(60, 2, 1.0, 21, 0.1);
    for (auto kind : {KernelKind::linear, KernelKind::rbf, KernelKind::poly}) {
        const double c = 2.0;
        auto m = train_svm(d.x, d.y, c, kind, 2);
        // Recover alpha per training row from the stored support vectors.
        std::vector<double> alpha(d.x.rows(), 0.0);
        for (std::size_t s = 0; s < m.support.rows(); ++s)
            for (std::size_t i = 0; i < d.x.rows(); ++i)
                if (std::equal(d.x.row(i).begin(), d.x.row(i).end(), m.support.row(s).begin()))
                    alpha[i] = std::abs(m.coef[s]);
        double sum = 0;
        for (std::size_t s = 0; s < m.coef.size(); ++s) sum += m.coef[s];
        EXPECT_NEAR(sum, 0.0, 1e-9);  // sum alpha_i y_i = 0
        for (std::size_t i = 0; i < d.x.rows(); ++i) {
            const double yf = (d.y[i] ? 1 : -1) * m.decision(d.x.row(i));
            ASSERT_GE(alpha[i], 0.0);
            ASSERT_LE(alpha[i], c + 1e-12);
            if (alpha[i] == 0.0) EXPECT_GE(yf, 1 - 2e-3);
            else if (alpha[i] >= c) EXPECT_LE(yf, 1 + 2e-3);
            else EXPECT_NEAR(yf, 1.0, 2e-3);
        }
    }
}

TEST(Svm, DuplicationLeavesLinearBoundary) {
    const Data d = blobs(40, 2, 6.0, 22);
    Matrix dup(80, 2);
    std::vector<int> ydup;
    for (std::size_t i = 0; i < 80; ++i) {
        for (std::size_t j = 0; j < 2; ++j) dup(i, j) = d.x(i % 40, j);
        ydup.push_back(d.y[i % 40]);
    }
    auto a = train_svm(d.x, d.y, 10.0, KernelKind::linear, 3);
    auto b = train_svm(dup, ydup, 10.0, KernelKind::linear, 3);
    const Matrix probe = random_matrix(1000, 2, 23, 6.0);
    const auto fa = a.decision_function(probe), fb = b.decision_function(probe);
    for (std::size_t i = 0; i < fa.size(); ++i)
        if (std::abs(fa[i]) > 1e-2) { EXPECT_EQ(fa[i] > 0, fb[i] > 0); }
    const auto wa = a.linear_weights(), wb = b.linear_weights();
    EXPECT_NEAR(wa[0], wb[0], 5e-3);
    EXPECT_NEAR(wa[1], wb[1], 5e-3);
}

TEST(Svm, RbfSolvesXor) {
    Matrix x(40, 2);
    std::vector<int> y(40);
    SeededRng rng(24);
    for (std::size_t i = 0; i < 40; ++i) {
        const double a = rng.uniform() < 0.5 ? -1 : 1, b = rng.uniform() < 0.5 ? -1 : 1;
        x(i, 0) = a + 0.1 * rng.normal();
        x(i, 1) = b + 0.1 * rng.normal();
        y[i] = a * b > 0 ? 1 : 0;
    }
    auto m = train_svm(x, y, 10.0, KernelKind::rbf, 3);
    const auto f = m.decision_function(x);
    for (std::size_t i = 0; i < 40; ++i) EXPECT_EQ(f[i] > 0, y[i] == 1);
    // Platt link is increasing in the decision value.
    EXPECT_LT(m.platt_a, 0.0);
    EXPECT_THROW(train_svm(x, y, 0.0, KernelKind::rbf, 3), InvalidArgument);
}

// ------------------------------------------------------------------- trees

TEST(DecisionTree, PureInputIsSingleLeaf) {
    Matrix x{{1}, {2}, {3}};
    std::vector<int> y{1, 1, 1};
    auto t = grow_classification_tree(x, y, {0, 1, 2}, TreeParams{});
    ASSERT_EQ(t.nodes.size(), 1u);
    EXPECT_EQ(t.nodes[0].value, 1.0);
}

TEST(DecisionTree, ThresholdMatchesExhaustiveOracle) {
    SeededRng rng(31);
    for (int trial = 0; trial < 50; ++trial) {
        const std::size_t n = 5 + rng.uniform_int(30);
        Matrix x(n, 1);
        std::vector<int> y(n);
        const double cut = rng.uniform();
        for (std::size_t i = 0; i < n; ++i) {
            x(i, 0) = rng.uniform();
            y[i] = x(i, 0) > cut;
        }
        int pos = 0;
        for (int v : y) pos += v;
        if (pos == 0 || pos == int(n)) continue;
        auto t = train_decision_tree(x, y, {Criterion::gini, 1, 2, 1, 0});
        ASSERT_EQ(t.depth(), 1u);
        // Oracle: the midpoint between the largest negative and smallest positive.
        double max_neg = -1, min_pos = 2;
        for (std::size_t i = 0; i < n; ++i)
            (y[i] ? min_pos : max_neg) = y[i] ? std::min(min_pos, x(i, 0)) : std::max(max_neg, x(i, 0));
        EXPECT_DOUBLE_EQ(t.nodes[0].threshold, (max_neg + min_pos) / 2);
        EXPECT_EQ(t.proba1(x), std::vector<double>(y.begin(), y.end()));
    }
}

TEST(DecisionTree, BestSplitEqualsBruteForceImpurityScan) {
    SeededRng rng(32);
    for (int trial = 0; trial < 30; ++trial) {
        const Data d = blobs(25, 3, 1.0, 100 + trial, 0.2);
        for (auto crit : {Criterion::gini, Criterion::entropy}) {
            auto t = train_decision_tree(d.x, d.y, {crit, 1, 2, 1, 0});
            if (t.nodes.size() == 1) continue;
            auto child_impurity = [&](std::size_t f, double thr) {
                double nl = 0, pl = 0, nr = 0, pr = 0;
                for (std::size_t i = 0; i < 25; ++i)
                    if (d.x(i, f) <= thr) {
                        nl++;
                        pl += d.y[i];
                    } else {
                        nr++;
                        pr += d.y[i];
                    }
                return (nl * detail::impurity(crit, pl, nl) + nr * detail::impurity(crit, pr, nr)) / 25;
            };
            double best = 1e9;
            for (std::size_t f = 0; f < 3; ++f)
                for (std::size_t i = 0; i < 25; ++i)
                    for (std::size_t k = 0; k < 25; ++k)
                        if (d.x(k, f) > d.x(i, f)) best = std::min(best, child_impurity(f, (d.x(i, f) + d.x(k, f)) / 2));
            EXPECT_NEAR(child_impurity(std::size_t(t.nodes[0].feature), t.nodes[0].threshold), best, 1e-12);
        }
    }
}

TEST(DecisionTree, RespectsGrowthConstraints) {
    const Data d = blobs(200, 4, 0.5, 33, 0.2);
    auto deep = train_decision_tree(d.x, d.y, {Criterion::entropy, 1000, 2, 1, 0});
    EXPECT_EQ(deep.proba1(d.x), std::vector<double>(d.y.begin(), d.y.end()));  // grows to purity
    auto capped = train_decision_tree(d.x, d.y, {Criterion::gini, 3, 2, 1, 0});
    EXPECT_LE(capped.depth(), 3u);
    auto leafy = train_decision_tree(d.x, d.y, {Criterion::gini, 1000, 2, 7, 0});
    for (const auto& n : leafy.nodes)
        if (n.is_leaf()) { EXPECT_GE(n.samples, 7u); }
    auto split = train_decision_tree(d.x, d.y, {Criterion::gini, 1000, 30, 1, 0});
    for (const auto& n : split.nodes)
        if (!n.is_leaf()) { EXPECT_GE(n.samples, 30u); }
}

TEST(DecisionTree, MinSamplesSplitBelowTwoIsClampedWithWarning) {
    const Data d = blobs(30, 2, 1.0, 34);
    ModelSpec spec{ModelKind::decision_tree, {{"criterion", "gini"}, {"max_depth", std::int64_t(150)},
                                              {"min_samples_split", std::int64_t(1)},
                                              {"min_samples_leaf", std::int64_t(1)}}, {}};
    Diagnostics diag;
    auto m = train_model(spec, d.x, d.y, SeededRng(1), &diag);
    EXPECT_TRUE(diag.has("param_clamped"));
    spec.params.set("min_samples_split", std::int64_t(2));
    EXPECT_EQ(predict_proba1(train_model(spec, d.x, d.y, SeededRng(1)), d.x), predict_proba1(m, d.x));
}

TEST(RandomForest, DegenerateForestIsTheTree) {
    const Data d = blobs(80, 5, 1.0, 41, 0.1);
    TreeParams p{Criterion::entropy, 20, 2, 1, 0};
    auto tree = train_decision_tree(d.x, d.y, p);
    auto forest = train_random_forest(d.x, d.y, 1, p, MaxFeatures::all, SeededRng(5), false);
    ASSERT_EQ(forest.trees.size(), 1u);
    EXPECT_EQ(forest.trees[0], tree);
}

TEST(RandomForest, BeatsShallowTreeOnTrainingData) {
    const Data d = blobs(200, 5, 1.0, 42, 0.15);
    auto shallow = train_decision_tree(d.x, d.y, {Criterion::gini, 2, 2, 1, 0});
    auto forest = train_random_forest(d.x, d.y, 50, {Criterion::gini, 100, 2, 1, 0}, MaxFeatures::sqrt,
                                      SeededRng(6));
    auto acc = [&](const std::vector<double>& p) {
        double s = 0;
        for (std::size_t i = 0; i < p.size(); ++i) s += (p[i] >= 0.5) == (d.y[i] == 1);
        return s / double(p.size());
    };
    EXPECT_GE(acc(forest.proba1(d.x)), acc(shallow.proba1(d.x)));
    EXPECT_EQ(resolve_max_features(max_features_from_string("auto"), 16), 4u);
    EXPECT_EQ(resolve_max_features(MaxFeatures::log2, 16), 4u);
    EXPECT_EQ(resolve_max_features(MaxFeatures::log2, 1), 1u);
}

// ---------------------------------------------------------------- boosting

TEST(GradientBoost, ZeroRoundsGiveBaseProbability) {
    const Data d = blobs(20, 2, 1.0, 51);
    BoostParams p;
    p.n_estimators = 0;
    TrainLog log;
    auto m = train_gradient_boost(d.x, d.y, p, &log);
    for (double v : m.proba1(d.x)) EXPECT_EQ(v, 0.5);
    EXPECT_NEAR(log.objective[0], std::log(2.0), 1e-15);
}

TEST(GradientBoost, FirstRoundLeafWeightsByHand) {
    // Depth-1 stump at margin 0: g = 0.5 - y, h = 0.25, lambda = 1.
    Matrix x{{0}, {1}, {2}, {3}, {4}};
    std::vector<int> y{0, 0, 0, 1, 1};
    BoostParams p;
    p.n_estimators = 1;
    p.max_depth = 1;
    p.learning_rate = 0.1;
    p.min_child_weight = 0.0;
    auto m = train_gradient_boost(x, y, p);
    const auto& t = m.trees[0];
    ASSERT_EQ(t.nodes.size(), 3u);
    EXPECT_DOUBLE_EQ(t.nodes[0].threshold, 2.5);
    EXPECT_NEAR(t.evaluate(std::vector<double>{0.0}), -0.1 * 1.5 / (0.75 + 1.0), 1e-15);
    EXPECT_NEAR(t.evaluate(std::vector<double>{4.0}), -0.1 * -1.0 / (0.5 + 1.0), 1e-15);
}

TEST(GradientBoost, TrainingLossNonIncreasingPerRound) {
    for (int run = 0; run < 50; ++run) {
        const Data d = blobs(60, 3, 0.8, 500 + run, 0.15);
        BoostParams p;
        p.n_estimators = 40;
        p.max_depth = 1 + std::size_t(run % 5);
        p.learning_rate = run % 2 ? 0.1 : 0.3;
        TrainLog log;
        train_gradient_boost(d.x, d.y, p, &log);
        ASSERT_EQ(log.objective.size(), 41u);
        for (std::size_t r = 1; r < log.objective.size(); ++r)
            ASSERT_LE(log.objective[r], log.objective[r - 1]) << "run " << run << " round " << r;
    }
}

// ------------------------------------------------------ logistic regression

TEST(LogisticRegression, SymmetricDataGivesZeroCoefficients) {
    Matrix x{{1, 2}, {1, 2}, {-1, -2}, {-1, -2}};
    std::vector<int> y{1, 0, 1, 0};
    for (auto pen : {Penalty::l1, Penalty::l2}) {
        auto m = train_logistic_regression(x, y, pen, 100.0);
        EXPECT_NEAR(m.coef[0], 0.0, 1e-9);
        EXPECT_NEAR(m.coef[1], 0.0, 1e-9);
        EXPECT_NEAR(m.proba1(Matrix{{0.3, 0.7}})[0], 0.5, 1e-9);
    }
}

TEST(LogisticRegression, GradientMatchesFiniteDifferences) {
    SeededRng rng(61);
    for (int trial = 0; trial < 20; ++trial) {
        const Data d = blobs(3, 4, 1.0, 600 + trial);
        std::vector<int> y{1, 0, 1};
        for (auto pen : {Penalty::l2, Penalty::l1}) {
            LogisticObjective f{d.x, y, pen, 0.5 + rng.uniform()};
            std::vector<double> theta(5);
            for (auto& v : theta) v = 0.2 + rng.uniform();  // away from the l1 kink
            if (rng.uniform() < 0.5) theta[1] = -theta[1];
            auto g = f.gradient(theta);
            if (pen == Penalty::l1)
                for (std::size_t j = 0; j < 4; ++j) g[j] += (theta[j] > 0 ? 1 : -1) / f.c;
            for (std::size_t j = 0; j < 5; ++j) {
                const double h = 1e-6;
                auto tp = theta, tm = theta;
                tp[j] += h;
                tm[j] -= h;
                const double fd = (f.value(tp) - f.value(tm)) / (2 * h);
                EXPECT_LT(relative_error(g[j], fd), 1e-4) << "coordinate " << j;
            }
        }
    }
}

TEST(LogisticRegression, ReachesGradientTolerance) {
    const Data d = blobs(120, 4, 1.0, 62, 0.1);
    for (auto pen : {Penalty::l2, Penalty::l1})
        for (double c : {0.01, 1.0, 1000.0}) {
            TrainLog log;
            auto m = train_logistic_regression(d.x, d.y, pen, c, {}, &log);
            LogisticObjective f{d.x, d.y, pen, c};
            std::vector<double> theta = m.coef;
            theta.push_back(m.intercept);
            EXPECT_TRUE(log.converged);
            EXPECT_LT(f.optimality(theta, f.gradient(theta)), 1e-6);
            for (std::size_t i = 1; i < log.objective.size(); ++i) EXPECT_LE(log.objective[i], log.objective[i - 1]);
        }
}

TEST(LogisticRegression, L1ZeroesCoefficientsUnderStrongPenalty) {
    const Data d = blobs(100, 5, 0.3, 63);
    auto m = train_logistic_regression(d.x, d.y, Penalty::l1, 0.5);
    int zeros = 0;
    for (double v : m.coef) zeros += v == 0.0;
    EXPECT_GE(zeros, 3);
}

// ---------------------------------------------------------------------- ANN

TEST(Ann, EveryLayerGradientMatchesFiniteDifferences) {
    SeededRng rng(71);
    for (int trial = 0; trial < 5; ++trial) {
        AnnModel m = init_ann(4, {6, 5, 4}, 1e-3, rng);
        // Move batch-norm parameters off their initial values.
        for (auto& g : m.gamma)
            for (auto& v : g) v = 0.5 + rng.uniform();
        for (auto& b : m.beta)
            for (auto& v : b) v = rng.normal() * 0.3;
        const Matrix x = random_matrix(3, 4, 700 + std::uint64_t(trial), 1.0);
        std::vector<int> y{1, 0, 1};
        AnnGradients g;
        ann_loss_and_gradient(m, x, y, &g);
        auto params = detail::ann_parameter_blocks(m);
        auto grads = detail::ann_gradient_blocks(g);
        ASSERT_EQ(params.size(), 14u);  // 3 x (W, b, gamma, beta) + output (W, b)
        for (std::size_t blk = 0; blk < params.size(); ++blk) {
            for (std::size_t i = 0; i < params[blk].size(); ++i) {
                double& w = params[blk][i];
                const double saved = w, h = 1e-5;
                w = saved + h;
                const double up = ann_loss_and_gradient(m, x, y, nullptr);
                w = saved - h;
                const double down = ann_loss_and_gradient(m, x, y, nullptr);
                w = saved;
                const double fd = (up - down) / (2 * h);
                // Hidden biases feed batch-norm and cancel exactly: both sides ~ 0.
                if (std::abs(fd) < 1e-9 && std::abs(grads[blk][i]) < 1e-9) continue;
                EXPECT_LT(relative_error(grads[blk][i], fd), 1e-4) << "block " << blk << " index " << i;
            }
        }
    }
}

TEST(Ann, FitsSeparableBlobs) {
    const Data d = blobs(100, 4, 4.0, 72);
    AnnParams p;
    TrainLog log;
    auto m = train_ann(d.x, d.y, p, small_ann_settings(), SeededRng(1), &log);
    std::vector<int> pred;
    for (double v : m.proba1(d.x)) pred.push_back(v >= 0.5);
    EXPECT_EQ(accuracy(pred, d.y), 1.0);
    EXPECT_LE(log.iterations, 50u);
    // Mini-batch noise aside, the last 5-epoch window sits below the first.
    const auto& obj = log.objective;
    ASSERT_GE(obj.size(), 10u);
    double first = 0, last = 0;
    for (std::size_t k = 0; k < 5; ++k) {
        first += obj[k];
        last += obj[obj.size() - 1 - k];
    }
    EXPECT_LT(last, first);
}

TEST(Ann, PlateauReducesLearningRate) {
    const Data d = blobs(60, 3, 0.0, 73);
    ModelSettings s = small_ann_settings();
    s.ann_epochs = 30;
    s.ann_learning_rate = 1e-12;  // weights frozen: validation loss stalls
    s.ann_early_stop_patience = 1000;
    AnnParams p;
    p.lr_patience = 3;
    p.lr_factor = 0.5;
    TrainLog log;
    train_ann(d.x, d.y, p, s, SeededRng(2), &log);
    EXPECT_LT(log.learning_rate.back(), log.learning_rate.front());
    for (std::size_t e = 1; e < log.learning_rate.size(); ++e) {
        const double ratio = log.learning_rate[e] / log.learning_rate[e - 1];
        EXPECT_TRUE(ratio == 1.0 || std::abs(ratio - 0.5) < 1e-15);
    }
}

TEST(Ann, SaturatedOutputHasFiniteLogLoss) {
    const Data d = blobs(40, 2, 30.0, 74);
    ModelSpec spec = cheap_specs().back();
    auto m = train_model(spec, d.x, d.y, SeededRng(3));
    Matrix far(2, 2);
    far(0, 0) = far(0, 1) = 1e6;
    far(1, 0) = far(1, 1) = -1e6;
    const auto p = predict_proba1(m, far);
    std::vector<int> wrong{p[0] >= 0.5 ? 0 : 1, p[1] >= 0.5 ? 0 : 1};
    const double ll = log_loss(wrong, p);
    EXPECT_TRUE(std::isfinite(ll));
    EXPECT_LE(ll, -std::log(1e-15) + 0.1);  // 1 - 1e-15 rounds to the nearest double
}

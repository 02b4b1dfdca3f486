// asdml: command-line front end for the screening toolkit.
//
//   asdml inspect    <dataset>
//   asdml train      --dataset children --model svm --params table4 [--out dir]
//   asdml evaluate   --dataset adult [--model all]           (Table 5-7 block)
//   asdml cluster    --dataset adult --k 2                   (Table 8 block)
//   asdml gridsearch --dataset children --model lr [--out dir]
//   asdml serve      --model-dir out/combined-ann --port 8080
//
// Every run prints the hash of the manifest it executed.

#include <csignal>
#include <iostream>

#include "CLI11.hpp"
#include "asdml/evaluation.hpp"
#include "asdml/service_http.hpp"

using namespace asdml;
using json = nlohmann::json;

namespace {

struct Common {
    std::string dataset = "children";
    std::string impute = "median";
    std::size_t top_k = 10;
    std::uint64_t seed = 42;
    bool drop_leaky = false;
    bool as_json = false;
    std::string out;
    std::string data_dir;

    std::filesystem::path dir() const { return data_dir.empty() ? asdml::data_dir() : std::filesystem::path(data_dir); }

    PreprocessConfig preprocess() const {
        PreprocessConfig c;
        c.impute = impute == "drop" ? "drop_rows" : impute;
        c.top_k = top_k;
        c.drop_leaky = drop_leaky;
        return c;
    }
};

void add_common(CLI::App* cmd, Common& c) {
    cmd->add_option("--dataset", c.dataset, "children | adult | combined | path to an ARFF file");
    cmd->add_option("--impute", c.impute, "missing-value strategy")
        ->check(CLI::IsMember({"median", "knn", "drop"}));
    cmd->add_option("--top-k", c.top_k, "number of chi-square ranked attributes kept")->check(CLI::PositiveNumber);
    cmd->add_option("--seed", c.seed, "master seed");
    cmd->add_flag("--drop-leaky", c.drop_leaky, "drop the AQ-10 `result` sum before selection");
    cmd->add_flag("--json", c.as_json, "machine-readable output");
    cmd->add_option("--out", c.out, "artifact directory");
    cmd->add_option("--data-dir", c.data_dir, "directory holding the UCI ARFF files (default $ASDML_DATA_DIR or data/)");
}

ModelKind parse_model(const std::string& s) {
    if (s == "lr") return ModelKind::logistic_regression;
    if (s == "nb") return ModelKind::naive_bayes;
    if (s == "rf") return ModelKind::random_forest;
    if (s == "dt") return ModelKind::decision_tree;
    if (s == "xgb" || s == "xgboost") return ModelKind::gradient_boost;
    return model_kind_from_string(s);
}

/// Keys into the kind's canonical order (JSON objects arrive sorted).
ParamPoint canonical_order(ModelKind kind, const ParamPoint& p) {
    ParamPoint out;
    for (const auto& k : param_keys(kind))
        if (auto* v = p.find(k)) out.values.emplace_back(k, *v);
    for (const auto& [k, v] : p.values)
        if (!out.find(k)) out.values.emplace_back(k, v);
    return out;
}

/// "table4" or a JSON file holding a point, {"params": point} or a grid-search
/// result ({"best": point}).
ParamPoint resolve_params(ModelKind kind, const std::string& params, const std::string& dataset) {
    if (params == "table4") {
        if (dataset != "children" && dataset != "adult" && dataset != "combined")
            throw StageError("manifest", "the table4 presets exist for children, adult and combined only; pass "
                                         "--params <file> for '" + dataset + "'");
        return table4_preset(kind, dataset);
    }
    const auto j = json::parse(read_file(params));
    const json& p = j.contains("best") ? j["best"] : j.contains("params") ? j["params"] : j;
    return canonical_order(kind, p.get<ParamPoint>());
}

void print_hash(const std::string& hash, bool as_json) {
    if (!as_json) std::cout << "manifest " << hash << "\n";
}

// ----------------------------------------------------------------- inspect

int cmd_inspect(const Common& c) {
    const auto t = load_dataset(c.dataset, c.dir());
    const auto& label = t.schema.attributes[t.schema.label_index()];
    std::size_t yes = 0, no = 0, missing = 0;
    json per_attr = json::object();
    for (std::size_t a = 0; a < t.schema.size(); ++a) {
        std::size_t m = 0;
        for (const auto& r : t.rows) m += is_missing(r[a]);
        missing += m;
        per_attr[t.schema.attributes[a].name] = m;
    }
    for (const auto& r : t.rows)
        if (!is_missing(r[t.schema.label_index()])) (encode_label(label, r[t.schema.label_index()]) ? yes : no)++;
    const json manifest = {{"command", "inspect"}, {"dataset", c.dataset}, {"data_hash", dataset_hash(c.dataset, c.dir())}};
    json j = {{"manifest_hash", manifest_hash(manifest)},
              {"dataset", c.dataset},
              {"relation", t.relation},
              {"rows", t.row_count()},
              {"attributes", t.schema.size()},
              {"yes", yes},
              {"no", no},
              {"missing", missing},
              {"missing_by_attribute", per_attr}};
    if (c.as_json) {
        std::cout << j.dump(2) << "\n";
        return 0;
    }
    print_hash(j["manifest_hash"], false);
    std::cout << t.row_count() << " rows, " << t.schema.size() << " attributes, " << yes << " yes / " << no << " no, "
              << missing << " missing\n";
    for (const auto& [name, m] : per_attr.items())
        if (m.get<std::size_t>() > 0) std::cout << "  " << name << ": " << m.get<std::size_t>() << " missing\n";
    return 0;
}

// ------------------------------------------------------------------- train

struct TrainOpts {
    std::string model = "svm";
    std::string params = "table4";
    std::string manifest;
    std::size_t folds = 5;
    double test_fraction = 0.3;
};

ExperimentManifest build_manifest(const Common& c, const TrainOpts& o, ModelKind kind) {
    ExperimentManifest m;
    m.dataset = c.dataset;
    m.preprocess = c.preprocess();
    m.seed = c.seed;
    m.test_fraction = o.test_fraction;
    m.cv_folds = o.folds;
    m.model.kind = kind;
    m.model.params = resolve_params(kind, o.params, c.dataset);
    m.params_source = o.params == "table4" ? "table4" : "file";
    return m;
}

void print_cv(const ExperimentResult& r) {
    if (!r.cv) return;
    std::cout << "cv (" << r.cv->folds.size() << "-fold, training split): accuracy "
              << detail::fixed(100 * r.cv->mean("accuracy"), 2) << " +/- " << detail::fixed(100 * r.cv->std("accuracy"), 2)
              << "\n";
}

int cmd_train(const Common& c, const TrainOpts& o) {
    ExperimentManifest m;
    if (!o.manifest.empty()) m = json::parse(read_file(o.manifest)).get<ExperimentManifest>();
    else m = build_manifest(c, o, parse_model(o.model));
    const auto r = run_experiment(m, c.dir());
    if (!c.out.empty()) write_experiment(r, c.out);
    if (c.as_json) {
        std::cout << r.report.dump(2) << "\n";
        return 0;
    }
    print_hash(r.manifest_hash, false);
    std::cout << "params: " << r.manifest.model.params.describe() << "\n";
    print_cv(r);
    std::cout << experiment_markdown(r);
    if (!c.out.empty()) std::cout << "artifacts: " << c.out << "\n";
    return 0;
}

// ---------------------------------------------------------------- evaluate

int cmd_evaluate(const Common& c, const TrainOpts& o) {
    std::vector<ModelKind> kinds;
    if (o.model == "all") kinds.assign(kAllModelKinds.begin(), kAllModelKinds.end());
    else
        for (const auto& part : CLI::detail::split(o.model, ','))
            kinds.push_back(parse_model(part));
    json reports = json::array();
    std::string md = metrics_markdown_header(), csv = metrics_csv_header();
    std::string hashes;
    for (auto k : kinds) {
        const auto r = run_experiment(build_manifest(c, o, k), c.dir());
        if (!c.out.empty()) write_experiment(r, std::filesystem::path(c.out) / to_string(k));
        reports.push_back(r.report);
        md += metrics_markdown_row(display_name(k), r.test);
        csv += metrics_csv_row(display_name(k), r.test);
        hashes += r.manifest_hash;
    }
    const auto combined_hash = hex64(fnv1a64(hashes));
    if (!c.out.empty()) {
        write_file(std::filesystem::path(c.out) / "table.md", md);
        write_file(std::filesystem::path(c.out) / "table.csv", csv);
    }
    if (c.as_json) {
        std::cout << json{{"manifest_hash", combined_hash}, {"reports", reports}}.dump(2) << "\n";
        return 0;
    }
    print_hash(combined_hash, false);
    std::cout << md;
    return 0;
}

// ----------------------------------------------------------------- cluster

struct ClusterOpts {
    std::size_t k = 2;
    std::size_t seeds = 10;
    std::string selection = "nmi";
    std::string algorithms = "all";
    std::string manifest;
};

int cmd_cluster(const Common& c, const ClusterOpts& o) {
    ClusterManifest m;
    if (!o.manifest.empty()) {
        m = json::parse(read_file(o.manifest)).get<ClusterManifest>();
    } else {
        m.dataset = c.dataset;
        m.preprocess = c.preprocess();
        m.seed = c.seed;
        m.cluster.k = o.k;
        m.seeds = o.seeds;
        m.seed_selection = o.selection;
        if (o.algorithms != "all") m.algorithms = CLI::detail::split(o.algorithms, ',');
    }
    const auto r = run_clustering_experiment(m, c.dir());
    if (!c.out.empty()) write_clustering(r, c.out);
    if (c.as_json) {
        std::cout << r.report.dump(2) << "\n";
        return 0;
    }
    print_hash(r.manifest_hash, false);
    std::cout << cluster_markdown(r);
    return 0;
}

// -------------------------------------------------------------- gridsearch

struct GridOpts {
    std::string model = "lr";
    std::string grid;  ///< JSON ParamGrid file; default Table 4
    std::string objective = "accuracy";
    std::size_t folds = 5;
    double test_fraction = 0.3;
};

int cmd_gridsearch(const Common& c, const GridOpts& o) {
    ExperimentManifest m;
    m.dataset = c.dataset;
    m.preprocess = c.preprocess();
    m.seed = c.seed;
    m.test_fraction = o.test_fraction;
    m.cv_folds = o.folds;
    m.model.kind = parse_model(o.model);
    m.model.params = table4_grid(m.model.kind).point(0);
    m.grid_search = true;
    m.objective = o.objective;
    m.grid = o.grid.empty() ? table4_grid(m.model.kind) : json::parse(read_file(o.grid)).get<ParamGrid>();
    const auto r = run_experiment(m, c.dir());
    if (!c.out.empty()) write_experiment(r, c.out);
    json j = grid_result_json(*r.search);
    j["manifest_hash"] = r.manifest_hash;
    j["model"] = to_string(m.model.kind);
    j["dataset"] = m.dataset;
    if (c.as_json) {
        std::cout << j.dump(2) << "\n";
        return 0;
    }
    print_hash(r.manifest_hash, false);
    std::cout << "evaluated " << r.search->table.size() << " points (" << r.search->distinct << " distinct), objective "
              << o.objective << "\n"
              << "best: " << r.search->best.describe() << "\n"
              << "cv " << o.objective << ": " << json(r.search->best_score).dump() << "\n"
              << "params json: " << json(r.search->best).dump() << "\n";
    std::cout << experiment_markdown(r);
    return 0;
}

// ------------------------------------------------------------------- serve

struct ServeOpts {
    std::vector<std::string> model_dirs;
    std::string default_id;
    std::string host = "127.0.0.1";
    int port = 8080;
    std::string cors_origin = "*";
};

httplib::Server* g_server = nullptr;

int cmd_serve(const Common& c, ServeOpts o) {
    if (o.model_dirs.empty() && std::filesystem::exists("models/combined-ann")) o.model_dirs.push_back("models/combined-ann");
    ScreeningService service;
    std::vector<std::string> hashes;
    bool found_default = o.default_id.empty();
    for (const auto& d : o.model_dirs) {
        auto m = load_model_dir(d);
        std::cerr << "loaded " << m.model_id << " from " << d << "\n";
        hashes.push_back(json::parse(read_file(std::filesystem::path(d) / "report.json")).value("manifest_hash", ""));
        const bool is_default = m.model_id == o.default_id;
        found_default = found_default || is_default;
        service.add(std::move(m), is_default);
    }
    if (!found_default) throw InvalidArgument("--default: no loaded model '" + o.default_id + "'");
    const json manifest = {{"command", "serve"}, {"models", hashes}};
    print_hash(manifest_hash(manifest), c.as_json);
    if (hashes.empty()) std::cerr << "warning: no model loaded; /screen answers 503\n";
    httplib::Server server;
    bind_routes(server, service, o.cors_origin);
    g_server = &server;
    std::signal(SIGINT, [](int) {
        if (g_server) g_server->stop();
    });
    std::signal(SIGTERM, [](int) {
        if (g_server) g_server->stop();
    });
    int port = o.port;
    if (port == 0) {
        port = server.bind_to_any_port(o.host);
        if (port <= 0) throw Error("cannot bind " + o.host);
    } else if (!server.bind_to_port(o.host, port)) {
        throw Error("cannot bind " + o.host + ":" + std::to_string(port));
    }
    std::cout << "listening on http://" << o.host << ":" << port << std::endl;
    server.listen_after_bind();
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"ASD screening toolkit: preprocessing, classifiers, clustering, experiments, service"};
    app.require_subcommand(1);
    Common common;
    TrainOpts train_opts, eval_opts;
    eval_opts.model = "all";
    ClusterOpts cluster_opts;
    GridOpts grid_opts;
    ServeOpts serve_opts;

    auto* inspect = app.add_subcommand("inspect", "summarise a dataset (rows, classes, missing values)");
    inspect->add_option("dataset", common.dataset, "children | adult | combined | ARFF path");
    inspect->add_flag("--json", common.as_json, "machine-readable output");
    inspect->add_option("--data-dir", common.data_dir, "directory holding the UCI ARFF files");

    auto add_train_opts = [](CLI::App* cmd, TrainOpts& o) {
        cmd->add_option("--model", o.model, "nb | knn | svm | rf | dt | xgb | lr | ann");
        cmd->add_option("--params", o.params, "table4 or a JSON parameter file");
        cmd->add_option("--folds", o.folds, "CV folds on the training split (0 = skip)");
        cmd->add_option("--test-fraction", o.test_fraction, "holdout fraction")->check(CLI::Range(0.0, 1.0));
    };
    auto* train = app.add_subcommand("train", "run one experiment (preprocess, split, CV, fit, score)");
    add_common(train, common);
    add_train_opts(train, train_opts);
    train->add_option("--manifest", train_opts.manifest, "rerun a manifest.json (other flags ignored)");

    auto* evaluate = app.add_subcommand("evaluate", "results table for several models on one dataset");
    add_common(evaluate, common);
    add_train_opts(evaluate, eval_opts);

    auto* cluster = app.add_subcommand("cluster", "five-algorithm clustering sweep (NMI / ARI / SC)");
    add_common(cluster, common);
    cluster->add_option("--k", cluster_opts.k, "number of clusters")->check(CLI::PositiveNumber);
    cluster->add_option("--seeds", cluster_opts.seeds, "restarts per stochastic algorithm")->check(CLI::PositiveNumber);
    cluster->add_option("--seed-selection", cluster_opts.selection, "nmi | objective")
        ->check(CLI::IsMember({"nmi", "objective"}));
    cluster->add_option("--algorithms", cluster_opts.algorithms, "comma list or 'all'");
    cluster->add_option("--manifest", cluster_opts.manifest, "rerun a manifest.json");

    auto* grid = app.add_subcommand("gridsearch", "exhaustive CV search over the Table 4 space");
    add_common(grid, common);
    grid->add_option("--model", grid_opts.model, "model kind");
    grid->add_option("--grid", grid_opts.grid, "JSON grid file (default: Table 4)");
    grid->add_option("--objective", grid_opts.objective, "CV metric to maximise (log_loss is minimised)");
    grid->add_option("--folds", grid_opts.folds, "CV folds")->check(CLI::Range(2, 1000));
    grid->add_option("--test-fraction", grid_opts.test_fraction, "holdout fraction")->check(CLI::Range(0.0, 1.0));

    auto* serve = app.add_subcommand("serve", "HTTP screening service");
    serve->add_option("--model-dir", serve_opts.model_dirs, "experiment output directory (repeatable)");
    serve->add_option("--default", serve_opts.default_id, "model id answering /screen by default");
    serve->add_option("--host", serve_opts.host, "bind address");
    serve->add_option("--port", serve_opts.port, "port (0 = any free port)");
    serve->add_option("--cors-origin", serve_opts.cors_origin, "Access-Control-Allow-Origin value");
    serve->add_flag("--json", common.as_json, "suppress the manifest line");

    CLI11_PARSE(app, argc, argv);
    try {
        if (*inspect) return cmd_inspect(common);
        if (*train) return cmd_train(common, train_opts);
        if (*evaluate) return cmd_evaluate(common, eval_opts);
        if (*cluster) return cmd_cluster(common, cluster_opts);
        if (*grid) return cmd_gridsearch(common, grid_opts);
        if (*serve) return cmd_serve(common, serve_opts);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}

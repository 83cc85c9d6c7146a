#include <catch_amalgamated.hpp>

#include <cmath>
#include <filesystem>
#include <map>
#include <vector>

#include "pdv/surrogate/dataset.hpp"
#include "pdv/surrogate/mlp.hpp"
#include "pdv/surrogate/surrogate.hpp"

using Catch::Approx;
using namespace pdv;

namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
    const auto dir = fs::temp_directory_path() / "pdv_unit_surrogate";
    fs::create_directories(dir);
    return dir / name;
}

ModelParams constant_vol(double b0) {
    ModelParams p = reference_params::beta12_study();
    p.beta_0 = b0;
    p.beta_1 = p.beta_2 = p.beta_12 = 0.0;
    return p;
}

double half_sq_loss(const Mlp<double>& net, const Mlp<double>::Matrix& x, double target) {
    const double y = net.forward(x)(0, 0);
    return 0.5 * (y - target) * (y - target);
}

}  // namespace

TEST_CASE("backprop matches central differences on a small network") {
    for (Activation act : {Activation::tanh, Activation::relu}) {
        MlpSpec spec{14, {{8, act}, {1, Activation::linear}}};
        Mlp<double> net(spec);
        net.initialize(make_stream(3));
        RngStream s = make_stream(4);
        for (auto& b : net.biases()) {
            for (Eigen::Index i = 0; i < b.size(); ++i) b(i) = 0.3 * (2 * next_uniform(s) - 1);
        }
        double worst = 0.0;
        for (int point = 0; point < 100; ++point) {
            Mlp<double>::Matrix x(14, 1);
            for (int i = 0; i < 14; ++i) x(i, 0) = 2 * next_uniform(s) - 1;
            const double target = next_uniform(s);
            Mlp<double>::Workspace ws;
            const double y = net.forward_train(x, ws)(0, 0);
            Mlp<double>::Matrix d(1, 1);
            d(0, 0) = y - target;
            Mlp<double>::Gradients g;
            net.backward(ws, d, g);

            std::vector<double> analytic, numeric;
            const double h = 1e-6;
            for (std::size_t l = 0; l < net.n_layers(); ++l) {
                auto& W = net.weights()[l];
                for (Eigen::Index i = 0; i < W.rows(); ++i) {
                    for (Eigen::Index j = 0; j < W.cols(); ++j) {
                        const double keep = W(i, j);
                        W(i, j) = keep + h;
                        const double up = half_sq_loss(net, x, target);
                        W(i, j) = keep - h;
                        const double dn = half_sq_loss(net, x, target);
                        W(i, j) = keep;
                        analytic.push_back(g.w[l](i, j));
                        numeric.push_back((up - dn) / (2 * h));
                    }
                }
                auto& b = net.biases()[l];
                for (Eigen::Index i = 0; i < b.size(); ++i) {
                    const double keep = b(i);
                    b(i) = keep + h;
                    const double up = half_sq_loss(net, x, target);
                    b(i) = keep - h;
                    const double dn = half_sq_loss(net, x, target);
                    b(i) = keep;
                    analytic.push_back(g.b[l](i));
                    numeric.push_back((up - dn) / (2 * h));
                }
            }
            double diff = 0, na = 0, nn = 0;
            for (std::size_t k = 0; k < analytic.size(); ++k) {
                diff += (analytic[k] - numeric[k]) * (analytic[k] - numeric[k]);
                na += analytic[k] * analytic[k];
                nn += numeric[k] * numeric[k];
            }
            const double rel = std::sqrt(diff) / std::max({std::sqrt(na), std::sqrt(nn), 1e-12});
            worst = std::max(worst, rel);
        }
        INFO("activation " << to_string(act));
        CHECK(worst < 1e-4);
    }
}

TEST_CASE("network spec parsing") {
    const auto d = MlpSpec::vix_default();
    CHECK(d.layers.size() == 6);
    CHECK(d.layers.back().act == Activation::linear);
    const auto p = MlpSpec::parse_hidden(d.hidden_string());
    CHECK(p == d);
    CHECK_THROWS_AS(MlpSpec::parse_hidden("12:sigmoid"), InputError);
    CHECK_THROWS_AS(MlpSpec::parse_hidden("12"), InputError);
    CHECK_THROWS_AS(MlpSpec::parse_hidden("0:relu"), InputError);
}

TEST_CASE("sampled configurations satisfy the constraints") {
    SampleStats st;
    const auto cfgs = sample_param_configs(ParamBounds::defaults(), 5000, 21, &st);
    CHECK(cfgs.size() == 5000);
    CHECK(st.draws > 5000);
    const auto box = ParamBounds::defaults();
    for (const auto& p : cfgs) {
        CHECK(p.lambda_10 > p.lambda_11);
        CHECK(p.lambda_20 > p.lambda_21);
        CHECK(std::abs(p.beta_1) * lambda_bar(p, 1) <= 10.0);
        CHECK(box.contains(p));
    }
    CHECK(sample_param_configs(ParamBounds::defaults(), 50, 21) == sample_param_configs(ParamBounds::defaults(), 50, 21));
}

TEST_CASE("collapsed bounds give identical configurations") {
    const ModelParams p = reference_params::joint_2021_06_02();
    const auto cfgs = sample_param_configs(ParamBounds::point(p), 7, 1);
    CHECK(cfgs.size() == 7);
    for (const auto& c : cfgs) CHECK(c == p);
    ModelParams bad = p;
    std::swap(bad.lambda_10, bad.lambda_11);
    CHECK_THROWS_AS(sample_param_configs(ParamBounds::point(bad), 1, 1, nullptr, 100), InputError);
}

// Acceptance probability of the default box by quadrature:
//   P = 1/2 * E[1{l10 > l11} * min(1, 40 / lambda_bar_1)]
// (the rate ordering of the second kernel is an independent coin flip, and
// |beta_1| is uniform on [0, 0.25]).
TEST_CASE("acceptance fraction matches quadrature") {
    const int n = 200;
    double acc = 0.0;
    for (int i = 0; i < n; ++i) {
        const double l0 = 1.0 + 99.0 * (i + 0.5) / n;
        for (int j = 0; j < n; ++j) {
            const double l1 = 1.0 + 99.0 * (j + 0.5) / n;
            if (!(l0 > l1)) continue;
            for (int k = 0; k < n; ++k) {
                const double th = (k + 0.5) / n;
                const double lb = (1 - th) * l0 + th * l1;
                acc += std::min(1.0, 40.0 / lb);
            }
        }
    }
    const double p = 0.5 * acc / (double(n) * n * n);
    SampleStats st;
    sample_param_configs(ParamBounds::defaults(), 200000, 5, &st);
    const double rate = double(st.accepted) / double(st.draws);
    // Binomial standard error over the draws.
    const double se = std::sqrt(p * (1 - p) / double(st.draws));
    INFO("quadrature " << p << ", sampled " << rate);
    CHECK(std::abs(rate - p) < 4 * se + 2e-4);
}

TEST_CASE("dataset from one configuration") {
    DatasetConfig cfg;
    cfg.panel.n_obs = 3;
    cfg.panel.nested.n_inner = 20;
    const std::vector<ModelParams> one{reference_params::joint_2021_06_02()};
    BuildLog log;
    const auto ds = build_dataset(one, cfg, &log);
    CHECK(ds.rows() == 3);
    CHECK(log.rows == 3);
    for (std::size_t i = 0; i < 3; ++i) CHECK(ds.params(i) == one[0]);
    CHECK(ds.group_starts().size() == 1);
    CHECK(ds.meta.at("t1").size() == 1);
    CHECK(ds.meta.at("t1")[0].get<double>() == Approx(std::max(1 / 44.42, 1 / 4.311)));
}

TEST_CASE("constant volatility targets") {
    DatasetConfig cfg;
    cfg.panel.n_obs = 4;
    cfg.panel.nested.n_inner = 10;
    const std::vector<ModelParams> cfgs{constant_vol(0.1), constant_vol(0.17)};
    const auto ds = build_dataset(cfgs, cfg);
    REQUIRE(ds.rows() == 8);
    for (std::size_t i = 0; i < 8; ++i) CHECK(ds.target(i) == Approx(100 * ds.params(i).beta_0).epsilon(1e-12));
}

TEST_CASE("row count accounting with dropped paths") {
    DatasetConfig cfg;
    cfg.panel.n_obs = 5;
    cfg.panel.outer_dt = 1.0 / 252;
    cfg.panel.nested.n_inner = 10;
    cfg.panel.nested.inner_dt = 1.0 / 252;
    cfg.outer_paths = 3;
    ModelParams wild = reference_params::beta12_study();
    wild.beta_0 = 3.0;
    wild.beta_12 = 0.3;
    const std::vector<ModelParams> cfgs{reference_params::joint_2021_06_02(), wild};
    BuildLog log;
    const auto ds = build_dataset(cfgs, cfg, &log);
    CHECK(log.outer_paths == 6);
    CHECK(log.dropped_outer_paths >= 1);
    CHECK(ds.rows() + log.rows_above_cap == (log.outer_paths - log.dropped_outer_paths) * cfg.panel.n_obs);
    CHECK(log.messages.size() == log.dropped_outer_paths);
    // Thread count does not change the rows.
    cfg.threads = 2;
    CHECK(build_dataset(cfgs, cfg).values == ds.values);
}

TEST_CASE("dataset files round trip") {
    Dataset ds;
    ds.append(reference_params::joint_2021_06_02(), {0.1, -0.2, 0.03, 0.04}, 18.25);
    ds.append(reference_params::beta12_study(), {1.0 / 3.0, 0.0, 0.0, 1e-9}, 21.0);
    ds.meta = {{"note", "x"}};
    for (auto fmt : {DatasetFormat::csv, DatasetFormat::binary}) {
        const auto path = scratch(fmt == DatasetFormat::csv ? "d.csv" : "d.bin");
        save_dataset(path, ds, fmt);
        const auto back = load_dataset(path);
        CHECK(back.values == ds.values);
        CHECK(back.meta == ds.meta);
    }
    io::write_text(scratch("bad.csv"), "lambda_10,oops\n1,2\n");
    CHECK_THROWS_AS(load_dataset(scratch("bad.csv")), InputError);
}

TEST_CASE("standardization round trip") {
    Dataset ds;
    RngStream s = make_stream(8);
    for (int i = 0; i < 50; ++i) {
        ModelParams p = reference_params::joint_2021_06_02();
        p.beta_0 += 0.01 * next_uniform(s);
        ds.append(p, {next_uniform(s), next_uniform(s), next_uniform(s), next_uniform(s)}, 20.0);
    }
    std::vector<std::size_t> rows(50);
    for (std::size_t i = 0; i < 50; ++i) rows[i] = i;
    const auto st = fit_standardization(ds, rows);
    for (int i = 0; i < surrogate_inputs; ++i) {
        CHECK(st.scale[i] > 0.0);
        for (double x : {-3.0, 0.0, 0.123456789, 42.0}) {
            CHECK(std::abs(st.destandardize(i, st.standardize(i, x)) - x) <= 1e-12 * std::max(1.0, std::abs(x)));
        }
    }
    CHECK(st.scale[0] == 1.0);  // constant lambda_10 column
}

TEST_CASE("a constant target is learned") {
    Dataset ds;
    RngStream s = make_stream(9);
    const auto cfgs = sample_param_configs(ParamBounds::defaults(), 40, 3);
    for (const auto& p : cfgs) {
        for (int k = 0; k < 10; ++k) ds.append(p, {next_uniform(s), next_uniform(s), next_uniform(s), next_uniform(s)}, 17.5);
    }
    TrainConfig tc;
    tc.spec = MlpSpec::parse_hidden("16:tanh");
    tc.learning_rate = 1e-2;
    tc.batch = 64;
    tc.max_epochs = 300;
    tc.patience = 300;
    tc.standardize_target = true;
    const auto res = train(ds, tc);
    CHECK(res.report.best_val_rmse < 0.05);
    CHECK(res.surrogate.predict_one(cfgs[0], {0.5, 0.5, 0.5, 0.5}) == Approx(17.5).margin(0.1));
}

TEST_CASE("training is reproducible and reports every epoch") {
    Dataset ds;
    const auto cfgs = sample_param_configs(ParamBounds::defaults(), 30, 4);
    RngStream s = make_stream(10);
    for (const auto& p : cfgs) {
        for (int k = 0; k < 8; ++k) {
            const FactorState st{next_uniform(s) - 0.5, next_uniform(s) - 0.5, 0.05 * next_uniform(s), 0.05 * next_uniform(s)};
            ds.append(p, st, 100 * std::abs(sigma(p, st)));
        }
    }
    TrainConfig tc;
    tc.spec = MlpSpec::parse_hidden("32:tanh,16:relu");
    tc.learning_rate = 3e-3;
    tc.batch = 32;
    tc.max_epochs = 15;
    tc.standardize_target = true;
    const auto a = train(ds, tc);
    const auto b = train(ds, tc);
    CHECK(a.report.epochs.size() == 15);
    CHECK(a.report.best_val_rmse == b.report.best_val_rmse);
    CHECK(a.report.jsonl() .size() > 0);
    CHECK(a.report.n_val_groups == 5);  // round(0.15 * 30)
    CHECK(a.report.epochs.back().train_rmse < a.report.epochs.front().train_rmse);
}

TEST_CASE("surrogate file round trip and errors") {
    MlpSpec spec = MlpSpec::vix_default();
    Surrogate s(spec, Mlp<float>(spec));
    s.net.initialize(make_stream(12));
    s.inputs.mean[3] = 0.7;
    s.inputs.scale[5] = 2.5;
    s.target_mean = 20.0;
    s.target_scale = 5.0;
    const auto path = scratch("s.pdvnn");
    save_surrogate(path, s);
    const auto back = load_surrogate(path);
    CHECK(back.spec == s.spec);
    CHECK(back.inputs == s.inputs);
    CHECK(back.box == s.box);

    RngStream r = make_stream(13);
    const auto cfgs = sample_param_configs(ParamBounds::defaults(), 100, 14);
    for (const auto& p : cfgs) {
        const FactorState st{next_uniform(r) - 0.5, next_uniform(r) - 0.5, next_uniform(r), next_uniform(r)};
        CHECK(back.predict_one(p, st) == s.predict_one(p, st));
    }

    std::string bytes = serialize_surrogate(s);
    bytes[20] ^= 0x5a;  // inside the JSON header
    CHECK_THROWS_AS(deserialize_surrogate(bytes), InputError);
    CHECK_THROWS_AS(deserialize_surrogate("garbage"), InputError);
    std::string truncated = serialize_surrogate(s);
    truncated.resize(truncated.size() / 2);
    CHECK_THROWS_AS(deserialize_surrogate(truncated), InputError);

    MlpSpec narrow{13, {{4, Activation::tanh}, {1, Activation::linear}}};
    Surrogate bad(narrow, Mlp<float>(narrow));
    CHECK_THROWS_WITH(deserialize_surrogate(serialize_surrogate(bad)), Catch::Matchers::ContainsSubstring("shape mismatch"));
}

TEST_CASE("untrained network is finite over the training box") {
    MlpSpec spec = MlpSpec::vix_default();
    Surrogate s(spec, Mlp<float>(spec));
    s.net.initialize(make_stream(15));
    const auto cfgs = sample_param_configs(ParamBounds::defaults(), 1000, 16);
    RngStream r = make_stream(17);
    std::vector<FactorState> states(100);
    std::vector<double> out(100);
    for (const auto& p : cfgs) {
        for (auto& st : states) st = {4 * next_uniform(r) - 2, 4 * next_uniform(r) - 2, next_uniform(r), next_uniform(r)};
        s.predict(p, states, out);
        for (double v : out) REQUIRE(std::isfinite(v));
    }
}

TEST_CASE("predictions do not depend on the thread count") {
    MlpSpec spec = MlpSpec::vix_default();
    Surrogate s(spec, Mlp<float>(spec));
    s.net.initialize(make_stream(18));
    std::vector<FactorState> states(3000);
    RngStream r = make_stream(19);
    for (auto& st : states) st = {next_uniform(r), next_uniform(r), next_uniform(r), next_uniform(r)};
    std::vector<double> a(states.size()), b(states.size());
    const auto p = reference_params::joint_2021_06_02();
    s.predict(p, states, a);
    s.threads = 3;
    s.predict(p, states, b);
    CHECK(a == b);
    // A state evaluated alone matches its value inside a batch.
    CHECK(s.predict_one(p, states[1500]) == a[1500]);
}

namespace {

// Replays the evaluation's own nested estimates: exact by construction.
struct Replay {
    std::map<std::array<double, 4>, double> table;
    void predict(const ModelParams&, std::span<const FactorState> st, std::span<double> out) const {
        for (std::size_t i = 0; i < st.size(); ++i) out[i] = table.at(st[i].to_array());
    }
    bool covers(const ModelParams&) const { return true; }
};

}  // namespace

TEST_CASE("evaluation against an exact model is zero") {
    EvalConfig ec;
    ec.panel.n_obs = 6;
    ec.panel.nested.n_inner = 30;
    ec.seed = 4;
    const std::vector<ModelParams> cfgs{reference_params::joint_2021_06_02(), reference_params::surrogate_check()};
    Replay replay;
    for (std::size_t i = 0; i < cfgs.size(); ++i) {
        PanelConfig pc = ec.panel;
        pc.seed = split(make_stream(ec.seed), i).key;
        pc.nested.on_divergence = DivergencePolicy::drop;
        for (const auto& rec : vix_panel(cfgs[i], pc)) replay.table[rec.state.to_array()] = rec.vix;
    }
    const auto rep = evaluate_surrogate(replay, cfgs, ec);
    CHECK(rep.failed == 0);
    CHECK(rep.mean_mae == 0.0);
    CHECK(rep.frac_below == 1.0);
    CHECK(rep.histogram.total() == 2);

    // Constant-volatility configurations against a constant model.
    struct Flat {
        void predict(const ModelParams&, std::span<const FactorState> st, std::span<double> out) const {
            for (std::size_t i = 0; i < st.size(); ++i) out[i] = 21.0;
        }
        bool covers(const ModelParams&) const { return true; }
    };
    const std::vector<ModelParams> flat{constant_vol(0.2), constant_vol(0.25)};
    const auto r2 = evaluate_surrogate(Flat{}, flat, ec);
    CHECK(r2.mae[0] == Approx(1.0).margin(1e-6));
    CHECK(r2.mae[1] == Approx(4.0).margin(1e-6));
}

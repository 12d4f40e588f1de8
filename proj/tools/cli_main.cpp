// advlab: train / eval / ablate / plot for the adversarial-training lab.
// Exit codes: 0 success, 1 usage or configuration problem, 2 runtime
// failure mid-job. All diagnostics go to stderr.
#include <CLI11.hpp>

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "advlab/attacks.hpp"
#include "advlab/config.hpp"
#include "advlab/dataset.hpp"
#include "advlab/errors.hpp"
#include "advlab/metrics.hpp"
#include "advlab/model.hpp"
#include "advlab/svg.hpp"
#include "advlab/train.hpp"

namespace {

using namespace advlab;

constexpr int kOk = 0, kUsage = 1, kRuntime = 2;

int usage_error(const std::string& what) {
    std::fprintf(stderr, "advlab: %s\n", what.c_str());
    return kUsage;
}

int runtime_error_code(const std::string& what) {
    std::fprintf(stderr, "advlab: %s\n", what.c_str());
    return kRuntime;
}

void print_dataset(const Dataset& d) {
    std::printf("dataset %s: %lld train / %lld test rows, dim %lld, "
                "classes %lld\n",
                d.name.c_str(),
                static_cast<long long>(d.train_x.shape()[0]),
                static_cast<long long>(d.test_x.shape()[0]),
                static_cast<long long>(d.dim()),
                static_cast<long long>(d.classes));
}

void print_record(const RunRecord& rec) {
    std::printf("%5s %8s %9s %9s %8s %8s %8s %7s\n", "epoch", "lr",
                "train_nat", "train_rob", "test_nat", "test_rob", "adv_loss",
                "psteps");
    std::printf("%5s %8s %9.4f %9.4f %8.4f %8.4f %8s %7s\n", "init", "-",
                rec.init_train_nat_acc, rec.init_train_rob_acc,
                rec.init_test_nat_acc, rec.init_test_rob_acc, "-", "-");
    for (const EpochRow& r : rec.rows)
        std::printf("%5lld %8g %9.4f %9.4f %8.4f %8.4f %8.4f %7.2f\n",
                    static_cast<long long>(r.epoch), r.lr, r.train_nat_acc,
                    r.train_rob_acc, r.test_nat_acc, r.test_rob_acc,
                    r.mean_adv_loss, r.perturb_steps);
    double last = rec.rows.empty() ? rec.init_test_rob_acc
                                   : rec.rows.back().test_rob_acc;
    std::printf("best epoch %lld: test robust accuracy %.4f\n",
                static_cast<long long>(rec.best_epoch),
                rec.best_test_rob_acc);
    std::printf("last: test robust accuracy %.4f (gap %.4f)\n", last,
                rec.best_test_rob_acc - last);
}

// "synth" and "moons" are the same desk-scale default; anything that is
// not a known generator name is an IDX prefix.
Dataset dataset_from_token(const std::string& token, int64_t n, double noise,
                           uint64_t seed, int64_t count) {
    if (token == "synth" || token == "moons")
        return gen_synthetic("moons", n, noise, seed);
    if (token == "gaussians") return gen_synthetic("gaussians", n, noise, seed);
    return load_idx_subset(token, count, seed);
}

struct EvalAttackArgs {
    std::string token = "pgd20";
    double epsilon = 0.1;
    double alpha = 0.0;  // 0 = epsilon / 4
    std::string norm = "linf";
    uint64_t seed = 1;
};

// "none", "fgsm", "pgd" (20 steps), or "pgd<K>".
std::optional<AttackConfig> attack_from_args(const EvalAttackArgs& a) {
    if (a.token == "none") return std::nullopt;
    AttackConfig cfg;
    cfg.norm_p = norm_from_string(a.norm);
    cfg.epsilon = a.epsilon;
    cfg.alpha = a.alpha > 0.0 ? a.alpha : a.epsilon / 4.0;
    cfg.seed = a.seed;
    if (a.token == "fgsm") {
        cfg.kind = AttackConfig::Kind::kFgsm;
        cfg.steps = 0;
        return cfg;
    }
    if (a.token.rfind("pgd", 0) == 0) {
        cfg.kind = AttackConfig::Kind::kPgd;
        cfg.random_start = true;
        std::string digits = a.token.substr(3);
        if (digits.empty()) {
            cfg.steps = 20;
        } else {
            char* end = nullptr;
            cfg.steps = std::strtoll(digits.c_str(), &end, 10);
            if (end != digits.c_str() + digits.size() || cfg.steps < 1)
                throw ConfigError("bad attack token '" + a.token + "'");
        }
        return cfg;
    }
    throw ConfigError("bad attack token '" + a.token +
                      "' (want none, fgsm, pgd, or pgd<K>)");
}

int cmd_train(const std::string& config_path, const std::string& out_dir) {
    RunConfig cfg;
    Dataset data{};
    try {
        cfg = load_config(config_path);
        data = make_dataset(cfg);
    } catch (const Error& e) {
        return usage_error(e.what());
    }
    try {
        print_dataset(data);
        Model m = Model::init(cfg.model, cfg.train.seed);
        TrainResult res = train(std::move(m), data, cfg.train, out_dir);
        print_record(res.record);
        if (!res.best_path.empty())
            std::printf("wrote %s, %s, %s/metrics.csv\n",
                        res.best_path.c_str(), res.last_path.c_str(),
                        out_dir.c_str());
        return kOk;
    } catch (const Error& e) {
        return runtime_error_code(e.what());
    }
}

int cmd_eval(const std::string& ckpt_path, const std::string& config_path,
             const std::string& data_token, int64_t data_n,
             double data_noise, uint64_t data_seed, int64_t data_count,
             const std::string& split, const EvalAttackArgs& atk_args,
             int64_t chunk) {
    Model m{ModelSpec{"logreg", 1, 2, 1}};
    Dataset data{};
    std::optional<AttackConfig> attack;
    try {
        m = load_checkpoint(ckpt_path);
        if (!config_path.empty()) {
            RunConfig cfg = load_config(config_path);
            data = make_dataset(cfg);
        } else {
            data = dataset_from_token(data_token, data_n, data_noise,
                                      data_seed, data_count);
        }
        if (split != "test" && split != "train")
            throw ConfigError("bad --split '" + split +
                              "' (want test or train)");
        attack = attack_from_args(atk_args);
        if (attack) {
            attack->input_box = data.input_box;
            attack->validate();
        }
    } catch (const Error& e) {
        return usage_error(e.what());
    }
    try {
        const Tensor& x = split == "test" ? data.test_x : data.train_x;
        const Tensor& y = split == "test" ? data.test_y : data.train_y;
        std::printf("checkpoint %s: %s dim %lld classes %lld, step %lld\n",
                    ckpt_path.c_str(), m.spec().arch.c_str(),
                    static_cast<long long>(m.spec().input_dim),
                    static_cast<long long>(m.spec().classes),
                    static_cast<long long>(m.step()));
        std::printf("dataset %s: eval split %s (%lld rows)\n",
                    data.name.c_str(), split.c_str(),
                    static_cast<long long>(x.shape()[0]));
        std::printf("natural accuracy = %.4f\n",
                    evaluate_accuracy(m, x, y, chunk));
        if (attack)
            std::printf("robust accuracy (%s, eps=%g, alpha=%g, %s) = %.4f\n",
                        atk_args.token.c_str(), attack->epsilon,
                        attack->alpha, norm_name(attack->norm_p),
                        evaluate_robustness(m, x, y, *attack, chunk));
        return kOk;
    } catch (const Error& e) {
        return runtime_error_code(e.what());
    }
}

int cmd_ablate(const std::string& config_path, const std::string& sweep_arg,
               const std::string& out_dir) {
    RunConfig cfg;
    Dataset data{};
    SweepSpec sweep;
    try {
        cfg = load_config(config_path);
        data = make_dataset(cfg);
        sweep = parse_sweep(sweep_arg);
    } catch (const Error& e) {
        return usage_error(e.what());
    }
    try {
        print_dataset(data);
        std::printf("sweep %s over %lld runs\n", sweep.key.c_str(),
                    static_cast<long long>(sweep.size()));
        std::vector<AblationEntry> table =
            run_ablation(cfg.model, data, cfg.train, sweep, out_dir);
        for (const AblationEntry& e : table) {
            char tag[64];
            if (e.key == "lsc")
                std::snprintf(tag, sizeof(tag), "%g:%g", e.range.p,
                              e.range.q);
            else
                std::snprintf(tag, sizeof(tag), "%g", e.value);
            const RunRecord& rec = e.result.record;
            double last = rec.rows.empty() ? rec.init_test_rob_acc
                                           : rec.rows.back().test_rob_acc;
            std::printf("%s=%-10s best=%.4f (epoch %lld)  last=%.4f  "
                        "gap=%.4f\n",
                        e.key.c_str(), tag, rec.best_test_rob_acc,
                        static_cast<long long>(rec.best_epoch), last,
                        rec.best_test_rob_acc - last);
        }
        if (!out_dir.empty())
            std::printf("runs written under %s/\n", out_dir.c_str());
        return kOk;
    } catch (const Error& e) {
        return runtime_error_code(e.what());
    }
}

int cmd_plot(const std::vector<std::string>& metrics_paths,
             const std::vector<std::string>& labels,
             const std::string& out_path) {
    std::vector<std::pair<std::string, RunRecord>> curves;
    try {
        if (!labels.empty() && labels.size() != metrics_paths.size())
            throw ConfigError("--labels count (" +
                              std::to_string(labels.size()) +
                              ") does not match --metrics count (" +
                              std::to_string(metrics_paths.size()) + ")");
        for (size_t i = 0; i < metrics_paths.size(); ++i) {
            std::string label =
                i < labels.size()
                    ? labels[i]
                    : std::filesystem::path(metrics_paths[i])
                          .stem()
                          .string();
            curves.emplace_back(label, read_metrics_csv(metrics_paths[i]));
        }
    } catch (const Error& e) {
        return usage_error(e.what());
    }
    try {
        emit_curves_svg(curves, out_path);
        int64_t max_epochs = 0;
        for (const auto& [label, rec] : curves)
            max_epochs = std::max(
                max_epochs, static_cast<int64_t>(rec.rows.size()));
        std::printf("wrote %s (%lld curves, %lld epochs)\n",
                    out_path.c_str(),
                    static_cast<long long>(curves.size()),
                    static_cast<long long>(max_epochs));
        return kOk;
    } catch (const Error& e) {
        return runtime_error_code(e.what());
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"adversarial-training lab: robust weight perturbation"};
    app.require_subcommand(1);

    // train
    std::string train_config, train_out;
    CLI::App* t = app.add_subcommand("train", "train a model from a config");
    t->add_option("--config", train_config, "run config file")->required();
    t->add_option("--out", train_out,
                  "output directory for checkpoints and metrics.csv")
        ->required();

    // eval
    std::string eval_ckpt, eval_config, eval_data = "synth";
    std::string eval_split = "test";
    int64_t eval_n = 1000, eval_count = 1000, eval_chunk = 256;
    double eval_noise = 0.1;
    uint64_t eval_data_seed = 1;
    EvalAttackArgs atk;
    CLI::App* e = app.add_subcommand("eval", "evaluate a checkpoint");
    e->add_option("--checkpoint", eval_ckpt, "model checkpoint")->required();
    e->add_option("--config", eval_config,
                  "take the dataset from this run config");
    e->add_option("--dataset", eval_data,
                  "synth | gaussians | moons | IDX file prefix");
    e->add_option("--n", eval_n, "synthetic sample count");
    e->add_option("--noise", eval_noise, "synthetic noise level");
    e->add_option("--data-seed", eval_data_seed, "dataset seed");
    e->add_option("--count", eval_count, "IDX training-row count");
    e->add_option("--split", eval_split, "test | train");
    e->add_option("--attack", atk.token, "none | fgsm | pgd | pgd<K>");
    e->add_option("--epsilon", atk.epsilon, "attack radius");
    e->add_option("--alpha", atk.alpha, "attack step size (0 = epsilon/4)");
    e->add_option("--norm", atk.norm, "linf | l2");
    e->add_option("--seed", atk.seed, "attack seed");
    e->add_option("--chunk", eval_chunk, "evaluation chunk size");

    // ablate
    std::string abl_config, abl_sweep, abl_out;
    CLI::App* a = app.add_subcommand(
        "ablate", "sweep one perturbation knob, one run per value");
    a->add_option("--config", abl_config, "base run config")->required();
    a->add_option("--sweep", abl_sweep,
                  "key=v1,v2,... (c_min | gamma | k2 | lsc)")
        ->required();
    a->add_option("--out", abl_out, "optional output root, one dir per run");

    // plot
    std::vector<std::string> plot_metrics, plot_labels;
    std::string plot_out;
    CLI::App* p = app.add_subcommand("plot", "render metrics CSVs as SVG");
    p->add_option("--metrics", plot_metrics, "metrics.csv paths")
        ->required()
        ->delimiter(',');
    p->add_option("--labels", plot_labels, "legend labels")->delimiter(',');
    p->add_option("--out", plot_out, "output SVG path")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& err) {
        int code = app.exit(err);
        return code == 0 ? kOk : kUsage;
    }

    try {
        if (app.got_subcommand(t)) return cmd_train(train_config, train_out);
        if (app.got_subcommand(e))
            return cmd_eval(eval_ckpt, eval_config, eval_data, eval_n,
                            eval_noise, eval_data_seed, eval_count,
                            eval_split, atk, eval_chunk);
        if (app.got_subcommand(a))
            return cmd_ablate(abl_config, abl_sweep, abl_out);
        if (app.got_subcommand(p))
            return cmd_plot(plot_metrics, plot_labels, plot_out);
    } catch (const std::exception& ex) {
        return runtime_error_code(ex.what());
    }
    return usage_error("no subcommand");
}

#include "advlab/train.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <optional>

#include "advlab/errors.hpp"
#include "advlab/rng.hpp"

namespace advlab {

namespace {

Tensor gather_rows(const Tensor& x, std::span<const int64_t> idx) {
    const int64_t dim = x.shape()[1];
    Tensor out({static_cast<int64_t>(idx.size()), dim});
    for (size_t r = 0; r < idx.size(); ++r)
        for (int64_t c = 0; c < dim; ++c)
            out[static_cast<int64_t>(r) * dim + c] = x[idx[r] * dim + c];
    return out;
}

Tensor gather_scalars(const Tensor& y, std::span<const int64_t> idx) {
    Tensor out({static_cast<int64_t>(idx.size())});
    for (size_t r = 0; r < idx.size(); ++r)
        out[static_cast<int64_t>(r)] = y[idx[r]];
    return out;
}

Tensor head_scalars(const Tensor& y, int64_t k) {
    Tensor out({k});
    for (int64_t i = 0; i < k; ++i) out[i] = y[i];
    return out;
}

bool any_nonzero(std::span<const double> v) {
    return std::any_of(v.begin(), v.end(), [](double x) { return x != 0.0; });
}

std::string fmt_value(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%g", v);
    return buf;
}

struct Evals {
    double train_nat = 0, train_rob = 0, test_nat = 0, test_rob = 0;
};

}  // namespace

void TrainConfig::validate() const {
    if (epochs < 0)
        throw ConfigError("train: epochs must be >= 0, got " +
                          std::to_string(epochs));
    if (batch_size < 1)
        throw ConfigError("train: batch_size must be >= 1, got " +
                          std::to_string(batch_size));
    if (!std::isfinite(lr) || lr < 0.0)
        throw ConfigError("train: lr must be finite and >= 0, got " +
                          std::to_string(lr));
    if (!std::isfinite(momentum) || momentum < 0.0 || momentum >= 1.0)
        throw ConfigError("train: momentum must lie in [0, 1), got " +
                          std::to_string(momentum));
    if (!std::isfinite(weight_decay) || weight_decay < 0.0)
        throw ConfigError("train: weight_decay must be finite and >= 0");
    if (!std::isfinite(lr_decay) || lr_decay <= 0.0)
        throw ConfigError("train: lr_decay must be finite and > 0");
    for (size_t i = 0; i < lr_milestones.size(); ++i) {
        if (lr_milestones[i] < 1)
            throw ConfigError("train: milestones must be epochs >= 1");
        if (i > 0 && lr_milestones[i] <= lr_milestones[i - 1])
            throw ConfigError("train: milestones must be strictly increasing");
    }
    if (lsc_edges.size() < 2)
        throw ConfigError("train: lsc_edges needs at least 2 entries");
    for (size_t i = 1; i < lsc_edges.size(); ++i)
        if (!(lsc_edges[i - 1] < lsc_edges[i]))
            throw ConfigError("train: lsc_edges must be strictly increasing");
    if (eval_train_rows < 0)
        throw ConfigError("train: eval_train_rows must be >= 0");
    if (eval_chunk < 1) throw ConfigError("train: eval_chunk must be >= 1");
    attack.validate();
    eval_attack.validate();
    perturb.validate();
    loss.validate();
}

double lr_at_epoch(const TrainConfig& cfg, int64_t epoch) {
    double lr = cfg.lr;
    for (const int64_t m : cfg.lr_milestones)
        if (epoch >= m) lr *= cfg.lr_decay;
    return lr;
}

int64_t SweepSpec::size() const {
    return static_cast<int64_t>(key == "lsc" ? ranges.size() : values.size());
}

void SweepSpec::validate() const {
    if (key != "c_min" && key != "gamma" && key != "k2" && key != "lsc")
        throw ConfigError("ablate: unknown sweep key '" + key +
                          "' (want c_min|gamma|k2|lsc)");
    if (key == "lsc") {
        if (!values.empty())
            throw ConfigError("ablate: lsc sweeps take ranges, not values");
        if (ranges.empty()) throw ConfigError("ablate: empty sweep");
    } else {
        if (!ranges.empty())
            throw ConfigError("ablate: only lsc sweeps take ranges");
        if (values.empty()) throw ConfigError("ablate: empty sweep");
        if (key == "k2")
            for (const double v : values)
                if (!(v >= 0.0) || v != std::floor(v))
                    throw ConfigError(
                        "ablate: k2 values must be nonnegative integers");
    }
}

StepMetrics train_step(Model& m, SgdState& opt, const Tensor& x,
                       const Tensor& y, const TrainConfig& cfg, double lr,
                       uint64_t attack_seed,
                       std::span<const double> row_weight) {
    if (opt.m.size() != static_cast<size_t>(m.weight_count()))
        throw ShapeError("train_step: optimizer state has " +
                         std::to_string(opt.m.size()) + " entries for " +
                         std::to_string(m.weight_count()) + " weights");
    if (x.shape().size() != 2)
        throw ShapeError("train_step: want x[batch, dim]");
    const int64_t rows = x.shape()[0];

    try {
        // (1) Inner maximization at the unperturbed weights.
        AttackConfig atk = cfg.attack;
        atk.seed = attack_seed;
        atk.kl_swapped = cfg.loss.kl_swapped;
        AdvBatch adv = atk.kind == AttackConfig::Kind::kFgsm
                           ? fgsm(m, x, y, atk)
                           : pgd(m, x, y, atk);

        // (2) Weight perturbation (returns immediately for AT).
        PerturbedView view(m);
        const PerturbState ps =
            rwp_generate(view, adv, cfg.loss, cfg.perturb, row_weight);
        const bool perturbed = any_nonzero(ps.v);

        // (3) Row-weighted loss gradient at w+v. With v = 0 the base
        // weights are bound directly, so an RWP run whose mask never
        // fires takes the exact AT code path from here on.
        TrainGraph tg = build_loss_graph(m, cfg.loss, rows);
        tg.g.bind("x_adv", adv.x_adv);
        tg.g.bind("labels", y);
        if (cfg.loss.kind != LossKind::kCE) tg.g.bind("x", x);
        bind_mask_ones(tg);
        if (row_weight.empty())
            bind_row_weight_uniform(tg);
        else
            tg.g.bind("row_weight", row_weight);
        std::vector<double> wv;
        if (perturbed) {
            wv = view.materialized();
            tg.g.bind("w", wv);
        } else {
            tg.g.bind("w", m.weights());
        }
        tg.g.backward(tg.objective);
        const std::span<const double> g = tg.g.grad(tg.w);

        StepMetrics sm;
        sm.mean_loss = tg.g.value(tg.objective).item();
        sm.per_example = tg.g.value(tg.per_example);
        sm.perturb_steps = ps.steps_taken;
        sm.mask_count = std::count(ps.mask.begin(), ps.mask.end(), true);

        // (4) Momentum buffer (indexed to w) absorbs the gradient plus
        // the weight-decay pull, both evaluated at w+v.
        const std::span<const double> at =
            perturbed ? std::span<const double>(wv)
                      : std::span<const double>(m.weights());
        std::span<double> w = m.weights();
        for (size_t i = 0; i < w.size(); ++i)
            opt.m[i] = cfg.momentum * opt.m[i] +
                       (g[i] + cfg.weight_decay * at[i]);
        // (5) Step the unperturbed weights. v was never added into w, so
        // (w+v) - lr*step - v holds with zero residue; a zero step applies
        // nothing at all.
        if (lr != 0.0)
            for (size_t i = 0; i < w.size(); ++i) w[i] -= lr * opt.m[i];
        m.set_step(m.step() + 1);
        return sm;
    } catch (const NumericError& e) {
        throw NumericError(
            "train step " + std::to_string(m.step()) + ": " + e.what(),
            e.op_index);
    }
}

TrainResult train(Model m, const Dataset& data, const TrainConfig& cfg,
                  const std::string& out_dir) {
    cfg.validate();
    data.validate();
    if (m.spec().input_dim != data.dim())
        throw ContractError("train: model input dim " +
                            std::to_string(m.spec().input_dim) +
                            " does not match dataset dim " +
                            std::to_string(data.dim()));
    if (m.spec().classes < data.classes)
        throw ContractError("train: model has " +
                            std::to_string(m.spec().classes) +
                            " classes for a dataset with " +
                            std::to_string(data.classes));

    // The dataset's input box clamps both attacks unless the config
    // already pinned one.
    TrainConfig c = cfg;
    if (!c.attack.input_box) c.attack.input_box = data.input_box;
    if (!c.eval_attack.input_box) c.eval_attack.input_box = data.input_box;

    const bool rst = c.loss.kind == LossKind::kRst;
    const int64_t n_train = data.train_x.shape()[0];
    const int64_t n_lab = rst ? n_train / 2 : n_train;
    const int64_t n_pse = rst ? n_train - n_lab : 0;
    const int64_t bs = c.batch_size;
    if (bs > n_lab)
        throw ContractError("train: batch size " + std::to_string(bs) +
                            " exceeds the " + std::to_string(n_lab) +
                            " usable train rows");
    const int64_t steps_per_epoch = n_lab / bs;
    const int64_t dim = data.dim();

    const bool sub = c.eval_train_rows > 0 && c.eval_train_rows < n_train;
    const Tensor train_eval_x =
        sub ? data.train_x.take_rows(0, c.eval_train_rows) : data.train_x;
    const Tensor train_eval_y =
        sub ? head_scalars(data.train_y, c.eval_train_rows) : data.train_y;

    auto eval_epoch = [&](int64_t epoch) {
        Evals ev;
        AttackConfig ea = c.eval_attack;
        ea.seed = Rng::derive(c.seed, {stream::kEvalTrain, uint64_t(epoch)});
        ev.train_nat =
            evaluate_accuracy(m, train_eval_x, train_eval_y, c.eval_chunk);
        ev.train_rob = evaluate_robustness(m, train_eval_x, train_eval_y, ea,
                                           c.eval_chunk);
        ea.seed = Rng::derive(c.seed, {stream::kEvalTest, uint64_t(epoch)});
        ev.test_nat =
            evaluate_accuracy(m, data.test_x, data.test_y, c.eval_chunk);
        ev.test_rob = evaluate_robustness(m, data.test_x, data.test_y, ea,
                                          c.eval_chunk);
        return ev;
    };

    RunRecord rec;
    const Evals init = eval_epoch(0);
    rec.init_train_nat_acc = init.train_nat;
    rec.init_train_rob_acc = init.train_rob;
    rec.init_test_nat_acc = init.test_nat;
    rec.init_test_rob_acc = init.test_rob;
    rec.best_epoch = 0;
    rec.best_test_rob_acc = init.test_rob;
    Model best = m;

    // Eq. (6) weighting: mean over the labeled batch plus lambda times the
    // mean over the equal-size pseudo batch.
    std::vector<double> rst_weight;
    if (rst) {
        rst_weight.assign(static_cast<size_t>(2 * bs),
                          1.0 / static_cast<double>(bs));
        for (int64_t i = bs; i < 2 * bs; ++i)
            rst_weight[static_cast<size_t>(i)] =
                c.loss.lambda / static_cast<double>(bs);
    }

    SgdState opt(m.weight_count());
    for (int64_t epoch = 1; epoch <= c.epochs; ++epoch) {
        const double lr = lr_at_epoch(c, epoch);
        const std::vector<int64_t> perm =
            Rng(Rng::derive(c.seed, {stream::kShuffle, uint64_t(epoch)}))
                .permutation(n_lab);
        std::vector<int64_t> pperm;
        if (rst)
            pperm =
                Rng(Rng::derive(c.seed, {stream::kPseudo, uint64_t(epoch)}))
                    .permutation(n_pse);

        double loss_sum = 0.0;
        int64_t steps_sum = 0;
        std::vector<int64_t> hist(c.lsc_edges.size() - 1, 0);
        for (int64_t s = 0; s < steps_per_epoch; ++s) {
            const std::span<const int64_t> bidx(perm.data() + s * bs,
                                                static_cast<size_t>(bs));
            Tensor bx, by;
            if (rst) {
                bx = Tensor({2 * bs, dim});
                by = Tensor({2 * bs});
                for (int64_t r = 0; r < bs; ++r) {
                    const int64_t lsrc = bidx[static_cast<size_t>(r)];
                    const int64_t psrc =
                        n_lab + pperm[static_cast<size_t>(s * bs + r)];
                    for (int64_t col = 0; col < dim; ++col) {
                        bx[r * dim + col] = data.train_x[lsrc * dim + col];
                        bx[(bs + r) * dim + col] =
                            data.train_x[psrc * dim + col];
                    }
                    by[r] = data.train_y[lsrc];
                    by[bs + r] = data.train_y[psrc];
                }
            } else {
                bx = gather_rows(data.train_x, bidx);
                by = gather_scalars(data.train_y, bidx);
            }
            const uint64_t aseed = Rng::derive(
                c.seed, {stream::kAttack, uint64_t(epoch), uint64_t(s)});
            const StepMetrics sm = train_step(
                m, opt, bx, by, c, lr, aseed,
                rst ? std::span<const double>(rst_weight)
                    : std::span<const double>{});
            loss_sum += sm.mean_loss;
            steps_sum += sm.perturb_steps;
            const std::vector<int64_t> bh =
                lsc_histogram(sm.per_example.data(), c.lsc_edges);
            for (size_t k = 0; k < hist.size(); ++k) hist[k] += bh[k];
        }

        const Evals ev = eval_epoch(epoch);
        EpochRow row;
        row.epoch = epoch;
        row.lr = lr;
        row.train_nat_acc = ev.train_nat;
        row.train_rob_acc = ev.train_rob;
        row.test_nat_acc = ev.test_nat;
        row.test_rob_acc = ev.test_rob;
        row.mean_adv_loss = loss_sum / static_cast<double>(steps_per_epoch);
        row.perturb_steps = static_cast<double>(steps_sum) /
                            static_cast<double>(steps_per_epoch);
        row.lsc_hist = hist;
        rec.rows.push_back(std::move(row));

        if (ev.test_rob > rec.best_test_rob_acc) {
            rec.best_test_rob_acc = ev.test_rob;
            rec.best_epoch = epoch;
            best = m;
        }
    }

    TrainResult res{std::move(rec), std::move(best), std::move(m), "", ""};
    if (!out_dir.empty()) {
        std::error_code ec;
        std::filesystem::create_directories(out_dir, ec);
        if (ec)
            throw IoError("train: cannot create output dir '" + out_dir +
                          "': " + ec.message());
        res.best_path = out_dir + "/best.ckpt";
        res.last_path = out_dir + "/last.ckpt";
        save_checkpoint(res.best_path, res.best);
        save_checkpoint(res.last_path, res.last);
        write_metrics_csv(res.record, out_dir + "/metrics.csv");
    }
    return res;
}

std::vector<AblationEntry> run_ablation(const ModelSpec& spec,
                                        const Dataset& data,
                                        const TrainConfig& base,
                                        const SweepSpec& sweep,
                                        const std::string& out_dir) {
    spec.validate();
    base.validate();
    sweep.validate();
    const int64_t n = sweep.size();
    std::vector<std::optional<AblationEntry>> slots(static_cast<size_t>(n));
    std::vector<std::exception_ptr> errors(static_cast<size_t>(n));

    // Runs are fully independent (private model, optimizer, and derived
    // RNG streams), so sweep entries execute in parallel; the kernels
    // inside each run produce the same bits serial or threaded.
#pragma omp parallel for schedule(dynamic, 1)
    for (int64_t i = 0; i < n; ++i) {
        try {
            TrainConfig c = base;
            c.perturb.mode = PerturbMode::kRWP;
            double value = 0.0;
            LSCRange range;
            std::string tag;
            if (sweep.key == "lsc") {
                range = sweep.ranges[static_cast<size_t>(i)];
                c.perturb.lsc_override = range;
                tag = fmt_value(range.p) + "_" + fmt_value(range.q);
            } else {
                value = sweep.values[static_cast<size_t>(i)];
                if (sweep.key == "c_min")
                    c.perturb.c_min = value;
                else if (sweep.key == "gamma")
                    c.perturb.gamma = value;
                else
                    c.perturb.k2 = static_cast<int64_t>(value);
                tag = fmt_value(value);
            }
            const std::string dir =
                out_dir.empty() ? ""
                                : out_dir + "/" + sweep.key + "_" + tag;
            slots[static_cast<size_t>(i)].emplace(AblationEntry{
                sweep.key, value, range,
                train(Model::init(spec, base.seed), data, c, dir)});
        } catch (...) {
            errors[static_cast<size_t>(i)] = std::current_exception();
        }
    }
    for (const std::exception_ptr& e : errors)
        if (e) std::rethrow_exception(e);

    std::vector<AblationEntry> out;
    out.reserve(static_cast<size_t>(n));
    for (auto& s : slots) out.push_back(std::move(*s));
    return out;
}

}  // namespace advlab

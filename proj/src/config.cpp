#include "advlab/config.hpp"

#include <cerrno>
#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "advlab/errors.hpp"

namespace advlab {
namespace {

std::string trim(const std::string& s) {
    size_t b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    size_t e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

[[noreturn]] void fail(const std::string& what, int line) {
    throw ConfigError("config: " + what + " (line " + std::to_string(line) +
                      ")");
}

// Shortest decimal form that parses back to the same bits; falls back to
// 17 significant digits. Keeps serialized files readable (0.1, not
// 0.10000000000000001) without giving up exact round-trips.
std::string fmt_double(double v) {
    char buf[64];
    for (int prec = 1; prec <= 17; ++prec) {
        std::snprintf(buf, sizeof(buf), "%.*g", prec, v);
        double back = std::strtod(buf, nullptr);
        if (back == v || (std::isnan(back) && std::isnan(v))) return buf;
    }
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

// strtod over the whole token; `a/b` evaluates the fraction so paper
// constants like 8/255 stay exact in config files.
double parse_double_raw(const std::string& tok, const std::string& where,
                        int line) {
    size_t slash = tok.find('/');
    if (slash != std::string::npos) {
        double num = parse_double_raw(trim(tok.substr(0, slash)), where, line);
        double den =
            parse_double_raw(trim(tok.substr(slash + 1)), where, line);
        if (den == 0.0) fail(where + ": division by zero in '" + tok + "'",
                             line);
        return num / den;
    }
    if (tok.empty()) fail(where + ": empty number", line);
    errno = 0;
    char* end = nullptr;
    double v = std::strtod(tok.c_str(), &end);
    if (end != tok.c_str() + tok.size() || errno == ERANGE)
        fail(where + ": bad number '" + tok + "'", line);
    return v;
}

int64_t parse_int_raw(const std::string& tok, const std::string& where,
                      int line) {
    if (tok.empty()) fail(where + ": empty integer", line);
    errno = 0;
    char* end = nullptr;
    long long v = std::strtoll(tok.c_str(), &end, 10);
    if (end != tok.c_str() + tok.size() || errno == ERANGE)
        fail(where + ": bad integer '" + tok + "'", line);
    return static_cast<int64_t>(v);
}

uint64_t parse_u64_raw(const std::string& tok, const std::string& where,
                       int line) {
    if (tok.empty() || tok[0] == '-')
        fail(where + ": bad unsigned integer '" + tok + "'", line);
    errno = 0;
    char* end = nullptr;
    unsigned long long v = std::strtoull(tok.c_str(), &end, 10);
    if (end != tok.c_str() + tok.size() || errno == ERANGE)
        fail(where + ": bad unsigned integer '" + tok + "'", line);
    return static_cast<uint64_t>(v);
}

std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> out;
    size_t start = 0;
    while (true) {
        size_t comma = s.find(',', start);
        if (comma == std::string::npos) {
            out.push_back(trim(s.substr(start)));
            return out;
        }
        out.push_back(trim(s.substr(start, comma - start)));
        start = comma + 1;
    }
}

// Key/value table with take-semantics: every accessor removes its key, so
// whatever is left at the end is by definition unknown.
struct Parser {
    struct Entry {
        std::string value;
        int line = 0;
    };
    std::map<std::string, Entry> kv;
    std::vector<std::string> order;  // insertion order for error reports

    void insert(const std::string& key, const std::string& value, int line) {
        auto [it, fresh] = kv.emplace(key, Entry{value, line});
        if (!fresh)
            fail("duplicate key '" + key + "' (first on line " +
                     std::to_string(it->second.line) + ")",
                 line);
        order.push_back(key);
    }

    const Entry* take(const std::string& key) {
        auto it = kv.find(key);
        if (it == kv.end()) return nullptr;
        taken_.push_back(it->second);
        kv.erase(it);
        return &taken_.back();
    }

    void get(const std::string& key, double& into) {
        if (const Entry* e = take(key))
            into = parse_double_raw(e->value, key, e->line);
    }
    void get(const std::string& key, int64_t& into) {
        if (const Entry* e = take(key))
            into = parse_int_raw(e->value, key, e->line);
    }
    void get(const std::string& key, uint64_t& into) {
        if (const Entry* e = take(key))
            into = parse_u64_raw(e->value, key, e->line);
    }
    void get(const std::string& key, bool& into) {
        const Entry* e = take(key);
        if (!e) return;
        if (e->value == "true")
            into = true;
        else if (e->value == "false")
            into = false;
        else
            fail(key + ": expected true or false, got '" + e->value + "'",
                 e->line);
    }
    void get(const std::string& key, std::string& into) {
        if (const Entry* e = take(key)) into = e->value;
    }
    void get(const std::string& key, std::vector<int64_t>& into) {
        const Entry* e = take(key);
        if (!e) return;
        into.clear();
        if (e->value == "none") return;
        for (const std::string& tok : split_list(e->value))
            into.push_back(parse_int_raw(tok, key, e->line));
    }
    void get(const std::string& key, std::vector<double>& into) {
        const Entry* e = take(key);
        if (!e) return;
        into.clear();
        if (e->value == "none") return;
        for (const std::string& tok : split_list(e->value))
            into.push_back(parse_double_raw(tok, key, e->line));
    }

    // `lo:hi` or `none`.
    void get_pair(const std::string& key,
                  std::optional<std::pair<double, double>>& into) {
        const Entry* e = take(key);
        if (!e) return;
        if (e->value == "none") {
            into.reset();
            return;
        }
        size_t colon = e->value.find(':');
        if (colon == std::string::npos)
            fail(key + ": expected lo:hi or none, got '" + e->value + "'",
                 e->line);
        into = {parse_double_raw(trim(e->value.substr(0, colon)), key,
                                 e->line),
                parse_double_raw(trim(e->value.substr(colon + 1)), key,
                                 e->line)};
    }
    void get_range(const std::string& key, std::optional<LSCRange>& into) {
        std::optional<std::pair<double, double>> p;
        if (into) p = {into->p, into->q};
        get_pair(key, p);
        if (p)
            into = LSCRange{p->first, p->second};
        else
            into.reset();
    }

    template <typename Enum>
    void get_enum(const std::string& key, Enum& into,
                  Enum (*from_string)(const std::string&)) {
        const Entry* e = take(key);
        if (!e) return;
        try {
            into = from_string(e->value);
        } catch (const ConfigError& err) {
            fail(key + ": " + err.what(), e->line);
        }
    }

  private:
    // Owns taken entries so `take` can hand out stable pointers.
    std::vector<Entry> taken_;
};

void get_attack(Parser& p, const std::string& prefix, AttackConfig& a) {
    std::string kind = a.kind == AttackConfig::Kind::kFgsm ? "fgsm" : "pgd";
    p.get(prefix + ".kind", kind);
    if (kind == "fgsm")
        a.kind = AttackConfig::Kind::kFgsm;
    else if (kind == "pgd")
        a.kind = AttackConfig::Kind::kPgd;
    else
        throw ConfigError("config: " + prefix +
                          ".kind: expected fgsm or pgd, got '" + kind + "'");
    p.get_enum(prefix + ".norm", a.norm_p, &norm_from_string);
    p.get(prefix + ".epsilon", a.epsilon);
    p.get(prefix + ".alpha", a.alpha);
    p.get(prefix + ".steps", a.steps);
    p.get(prefix + ".random_start", a.random_start);
    std::string obj =
        a.objective == AttackConfig::Objective::kKL ? "kl" : "ce";
    p.get(prefix + ".objective", obj);
    if (obj == "ce")
        a.objective = AttackConfig::Objective::kCE;
    else if (obj == "kl")
        a.objective = AttackConfig::Objective::kKL;
    else
        throw ConfigError("config: " + prefix +
                          ".objective: expected ce or kl, got '" + obj + "'");
    p.get(prefix + ".kl_swapped", a.kl_swapped);
    p.get_pair(prefix + ".box", a.input_box);
    p.get(prefix + ".seed", a.seed);
}

std::string join_doubles(const std::vector<double>& v) {
    if (v.empty()) return "none";
    std::string out;
    for (size_t i = 0; i < v.size(); ++i) {
        if (i) out += ",";
        out += fmt_double(v[i]);
    }
    return out;
}

std::string join_ints(const std::vector<int64_t>& v) {
    if (v.empty()) return "none";
    std::string out;
    for (size_t i = 0; i < v.size(); ++i) {
        if (i) out += ",";
        out += std::to_string(v[i]);
    }
    return out;
}

std::string pair_or_none(const std::optional<std::pair<double, double>>& p) {
    if (!p) return "none";
    return fmt_double(p->first) + ":" + fmt_double(p->second);
}

void emit(std::string& out, const std::string& key, const std::string& v) {
    out += key;
    out += " = ";
    out += v;
    out += "\n";
}

void emit_attack(std::string& out, const std::string& prefix,
                 const AttackConfig& a) {
    emit(out, prefix + ".kind",
         a.kind == AttackConfig::Kind::kFgsm ? "fgsm" : "pgd");
    emit(out, prefix + ".norm", norm_name(a.norm_p));
    emit(out, prefix + ".epsilon", fmt_double(a.epsilon));
    emit(out, prefix + ".alpha", fmt_double(a.alpha));
    emit(out, prefix + ".steps", std::to_string(a.steps));
    emit(out, prefix + ".random_start", a.random_start ? "true" : "false");
    emit(out, prefix + ".objective",
         a.objective == AttackConfig::Objective::kKL ? "kl" : "ce");
    emit(out, prefix + ".kl_swapped", a.kl_swapped ? "true" : "false");
    emit(out, prefix + ".box", pair_or_none(a.input_box));
    emit(out, prefix + ".seed", std::to_string(a.seed));
}

}  // namespace

void RunConfig::validate() const {
    if (schema != 1)
        throw ConfigError("config: unsupported schema " +
                          std::to_string(schema));
    model.validate();
    train.validate();
    if (data_kind == "idx") {
        if (data_path.empty())
            throw ConfigError("config: data.kind = idx requires data.path");
        if (data_count < 1)
            throw ConfigError("config: data.count must be >= 1");
    } else if (data_kind == "gaussians" || data_kind == "moons") {
        if (data_n < 4)
            throw ConfigError("config: data.n must be >= 4");
        if (!(data_noise >= 0.0))
            throw ConfigError("config: data.noise must be >= 0");
    } else {
        throw ConfigError("config: unknown data.kind '" + data_kind +
                          "' (want gaussians, moons, or idx)");
    }
}

RunConfig parse_config(const std::string& text) {
    Parser p;
    std::istringstream in(text);
    std::string raw;
    int line_no = 0;
    while (std::getline(in, raw)) {
        ++line_no;
        std::string line = trim(raw);
        if (line.empty() || line[0] == '#') continue;
        size_t eq = line.find('=');
        if (eq == std::string::npos)
            fail("expected key = value, got '" + line + "'", line_no);
        std::string key = trim(line.substr(0, eq));
        std::string value = trim(line.substr(eq + 1));
        if (key.empty()) fail("empty key", line_no);
        p.insert(key, value, line_no);
    }

    RunConfig cfg;
    if (const Parser::Entry* e = p.take("schema")) {
        cfg.schema = parse_int_raw(e->value, "schema", e->line);
        if (cfg.schema != 1)
            fail("unsupported schema " + std::to_string(cfg.schema) +
                     " (this build reads schema 1)",
                 e->line);
    } else {
        throw ConfigError("config: missing required key 'schema'");
    }

    p.get("model.arch", cfg.model.arch);
    p.get("model.input_dim", cfg.model.input_dim);
    p.get("model.classes", cfg.model.classes);
    p.get("model.hidden", cfg.model.hidden);

    p.get("data.kind", cfg.data_kind);
    p.get("data.n", cfg.data_n);
    p.get("data.noise", cfg.data_noise);
    p.get("data.path", cfg.data_path);
    p.get("data.count", cfg.data_count);

    TrainConfig& t = cfg.train;
    p.get("train.epochs", t.epochs);
    p.get("train.batch_size", t.batch_size);
    p.get("train.lr", t.lr);
    p.get("train.momentum", t.momentum);
    p.get("train.weight_decay", t.weight_decay);
    p.get("train.lr_milestones", t.lr_milestones);
    p.get("train.lr_decay", t.lr_decay);
    p.get("train.seed", t.seed);
    p.get("train.eval_train_rows", t.eval_train_rows);
    p.get("train.eval_chunk", t.eval_chunk);
    p.get("train.lsc_edges", t.lsc_edges);

    p.get_enum("loss.kind", t.loss.kind, &loss_kind_from_string);
    p.get("loss.beta", t.loss.beta);
    p.get("loss.lambda", t.loss.lambda);
    p.get("loss.kl_swapped", t.loss.kl_swapped);

    get_attack(p, "attack", t.attack);
    get_attack(p, "eval_attack", t.eval_attack);

    p.get_enum("perturb.mode", t.perturb.mode, &perturb_mode_from_string);
    p.get("perturb.gamma", t.perturb.gamma);
    p.get("perturb.k2", t.perturb.k2);
    p.get("perturb.c_min", t.perturb.c_min);
    p.get_enum("perturb.mask_loss", t.perturb.mask_loss,
               &mask_loss_from_string);
    p.get_range("perturb.lsc", t.perturb.lsc_override);

    if (!p.kv.empty()) {
        // Report the first unknown key in file order.
        for (const std::string& key : p.order) {
            auto it = p.kv.find(key);
            if (it != p.kv.end())
                fail("unknown key '" + key + "'", it->second.line);
        }
    }

    // Reserved token: an infinite threshold IS the AWP ablation point.
    if (std::isinf(t.perturb.c_min) && t.perturb.c_min > 0.0)
        t.perturb.mode = PerturbMode::kAWP;

    cfg.validate();
    return cfg;
}

RunConfig load_config(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open config file: " + path);
    std::ostringstream body;
    body << in.rdbuf();
    if (in.bad()) throw IoError("failed reading config file: " + path);
    try {
        return parse_config(body.str());
    } catch (const ConfigError& e) {
        throw ConfigError(path + ": " + e.what());
    }
}

std::string serialize_config(const RunConfig& cfg) {
    cfg.validate();
    const TrainConfig& t = cfg.train;
    std::string out;
    emit(out, "schema", std::to_string(cfg.schema));
    out += "\n";
    emit(out, "model.arch", cfg.model.arch);
    emit(out, "model.input_dim", std::to_string(cfg.model.input_dim));
    emit(out, "model.classes", std::to_string(cfg.model.classes));
    emit(out, "model.hidden", std::to_string(cfg.model.hidden));
    out += "\n";
    emit(out, "data.kind", cfg.data_kind);
    emit(out, "data.n", std::to_string(cfg.data_n));
    emit(out, "data.noise", fmt_double(cfg.data_noise));
    emit(out, "data.path", cfg.data_path);
    emit(out, "data.count", std::to_string(cfg.data_count));
    out += "\n";
    emit(out, "train.epochs", std::to_string(t.epochs));
    emit(out, "train.batch_size", std::to_string(t.batch_size));
    emit(out, "train.lr", fmt_double(t.lr));
    emit(out, "train.momentum", fmt_double(t.momentum));
    emit(out, "train.weight_decay", fmt_double(t.weight_decay));
    emit(out, "train.lr_milestones", join_ints(t.lr_milestones));
    emit(out, "train.lr_decay", fmt_double(t.lr_decay));
    emit(out, "train.seed", std::to_string(t.seed));
    emit(out, "train.eval_train_rows", std::to_string(t.eval_train_rows));
    emit(out, "train.eval_chunk", std::to_string(t.eval_chunk));
    emit(out, "train.lsc_edges", join_doubles(t.lsc_edges));
    out += "\n";
    emit(out, "loss.kind", loss_kind_name(t.loss.kind));
    emit(out, "loss.beta", fmt_double(t.loss.beta));
    emit(out, "loss.lambda", fmt_double(t.loss.lambda));
    emit(out, "loss.kl_swapped", t.loss.kl_swapped ? "true" : "false");
    out += "\n";
    emit_attack(out, "attack", t.attack);
    out += "\n";
    emit_attack(out, "eval_attack", t.eval_attack);
    out += "\n";
    // Normalize like the parser: c_min = inf serializes as mode awp so the
    // parse(serialize(x)) identity holds.
    PerturbMode mode = t.perturb.mode;
    if (std::isinf(t.perturb.c_min) && t.perturb.c_min > 0.0)
        mode = PerturbMode::kAWP;
    emit(out, "perturb.mode", perturb_mode_name(mode));
    emit(out, "perturb.gamma", fmt_double(t.perturb.gamma));
    emit(out, "perturb.k2", std::to_string(t.perturb.k2));
    emit(out, "perturb.c_min", fmt_double(t.perturb.c_min));
    emit(out, "perturb.mask_loss", mask_loss_name(t.perturb.mask_loss));
    std::string lsc = "none";
    if (t.perturb.lsc_override)
        lsc = fmt_double(t.perturb.lsc_override->p) + ":" +
              fmt_double(t.perturb.lsc_override->q);
    emit(out, "perturb.lsc", lsc);
    return out;
}

void save_config(const RunConfig& cfg, const std::string& path) {
    std::string body = serialize_config(cfg);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open config file for write: " + path);
    out.write(body.data(), static_cast<std::streamsize>(body.size()));
    out.flush();
    if (!out) throw IoError("failed writing config file: " + path);
}

Dataset make_dataset(const RunConfig& cfg) {
    cfg.validate();
    if (cfg.data_kind == "idx")
        return load_idx_subset(cfg.data_path, cfg.data_count,
                               cfg.train.seed);
    return gen_synthetic(cfg.data_kind, cfg.data_n, cfg.data_noise,
                         cfg.train.seed);
}

SweepSpec parse_sweep(const std::string& arg) {
    size_t eq = arg.find('=');
    if (eq == std::string::npos)
        throw ConfigError("sweep: expected key=v1,v2,..., got '" + arg + "'");
    SweepSpec sweep;
    sweep.key = trim(arg.substr(0, eq));
    std::string rest = trim(arg.substr(eq + 1));
    if (rest.empty()) throw ConfigError("sweep: no values in '" + arg + "'");
    for (const std::string& tok : split_list(rest)) {
        if (sweep.key == "lsc") {
            size_t colon = tok.find(':');
            if (colon == std::string::npos)
                throw ConfigError("sweep: lsc values are p:q ranges, got '" +
                                  tok + "'");
            sweep.ranges.push_back(
                LSCRange{parse_double_raw(trim(tok.substr(0, colon)),
                                          "sweep " + sweep.key, 0),
                         parse_double_raw(trim(tok.substr(colon + 1)),
                                          "sweep " + sweep.key, 0)});
        } else {
            sweep.values.push_back(
                parse_double_raw(tok, "sweep " + sweep.key, 0));
        }
    }
    sweep.validate();
    return sweep;
}

}  // namespace advlab

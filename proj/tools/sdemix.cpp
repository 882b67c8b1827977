// sdemix: simulate panels, run the Gibbs sampler or MCEM, summarize traces.

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "sdemix/error.hpp"
#include "sdemix/gibbs.hpp"
#include "sdemix/mcem.hpp"
#include "sdemix/panel_io.hpp"
#include "sdemix/summary.hpp"
#include "sdemix/synth.hpp"

using namespace sdemix;

namespace {

std::string trim(const std::string& s) {
    std::size_t a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return {};
    std::size_t b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
}

// flat `key = value` file turned into `--key=value` arguments
std::vector<std::string> config_args(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file '" + path + "'");
    std::vector<std::string> out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        std::string t = trim(line);
        if (t.empty() || t[0] == '#' || t[0] == ';') continue;
        std::size_t eq = t.find('=');
        if (eq == std::string::npos) throw ParseError("expected 'key = value' in " + path, lineno);
        std::string key = trim(t.substr(0, eq)), val = trim(t.substr(eq + 1));
        while (!key.empty() && key[0] == '-') key.erase(0, 1);
        if (key.empty()) throw ParseError("empty key in " + path, lineno);
        if (val.size() >= 2 && (val.front() == '"' || val.front() == '\'') && val.back() == val.front())
            val = val.substr(1, val.size() - 2);
        out.push_back("--" + key + "=" + val);
    }
    return out;
}

// Config values go right after the subcommand so explicit flags override them.
std::vector<std::string> expand_config(int argc, char** argv) {
    std::vector<std::string> args(argv, argv + argc);
    std::optional<std::string> cfg;
    std::vector<std::string> rest;
    for (std::size_t i = 0; i < args.size(); ++i) {
        if (args[i] == "--config" && i + 1 < args.size()) {
            cfg = args[++i];
        } else if (args[i].rfind("--config=", 0) == 0) {
            cfg = args[i].substr(9);
        } else {
            rest.push_back(args[i]);
        }
    }
    if (!cfg) return rest;
    std::vector<std::string> extra = config_args(*cfg);
    std::size_t pos = rest.size() > 1 ? 2 : rest.size();
    rest.insert(rest.begin() + static_cast<std::ptrdiff_t>(pos), extra.begin(), extra.end());
    return rest;
}

std::ostream& open_or_stdout(const std::string& path, std::ofstream& file) {
    if (path.empty() || path == "-") return std::cout;
    file.open(path, std::ios::binary);
    if (!file) throw ConfigError("cannot open '" + path + "' for writing");
    return file;
}

struct Common {
    std::string model = "ou-speed";
    std::optional<std::uint64_t> seed;
    std::size_t threads = 0;
    std::string out;
    std::string config;  // consumed before parsing; declared for --help
};

void add_common(CLI::App* sub, Common& c, bool need_out) {
    sub->add_option("--model", c.model, "ou-speed, t-diffusion or ou-level")->capture_default_str();
    sub->add_option("--seed", c.seed, "random seed (u64)");
    sub->add_option("--threads", c.threads, "worker threads (default: SDEMIX_THREADS or all cores)");
    auto* o = sub->add_option("--out", c.out, "output CSV path ('-' for stdout)");
    if (need_out) o->required();
    sub->add_option("--config", c.config, "flat 'key = value' file; flags take precedence");
}

std::uint64_t resolve_seed(const Common& c) {
    if (c.seed) return *c.seed;
    const char* ci = std::getenv("CI");
    if (ci && *ci && std::string(ci) != "0" && std::string(ci) != "false")
        throw ConfigError("--seed is required when CI is set");
    return 1;
}

std::string diag_line(const Diagnostics& d) {
    std::ostringstream s;
    s << "bridges=" << d.bridges;
    if (d.bridges) s << " attempts/bridge=" << static_cast<double>(d.bridge_attempts) / static_cast<double>(d.bridges);
    if (d.bridge_mh_rejected) s << " bridge_mh_rejected=" << d.bridge_mh_rejected;
    if (d.wg_proposed)
        s << " wg_accept=" << static_cast<double>(d.wg_accepted) / static_cast<double>(d.wg_proposed)
          << " wg_fallback=" << d.wg_fallback;
    if (d.wg_burnin_exact) s << " wg_burnin_exact=" << d.wg_burnin_exact;
    if (d.rw_proposed)
        s << " rw_accept=" << static_cast<double>(d.rw_accepted) / static_cast<double>(d.rw_proposed)
          << " rw_zero_windows=" << d.rw_zero_windows;
    return s.str();
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Bayesian and MCEM inference for mixed-effects diffusions"};
    app.require_subcommand(1);
    app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);

    // simulate
    Common sim;
    SynthTruth truth;
    std::optional<double> s_beta, s_gamma;
    std::size_t units = 100, obs = 100;
    double dt = 1.0, t0 = 0.0;
    auto* simulate = app.add_subcommand("simulate", "generate a synthetic panel");
    add_common(simulate, sim, true);
    simulate->add_option("--beta", s_beta, "true beta (model default when omitted)");
    simulate->add_option("--gamma", s_gamma, "true effect rate");
    simulate->add_option("--alpha", truth.alpha, "true alpha (ou-level)")->capture_default_str();
    simulate->add_option("--xi", truth.xi, "true effect mean (ou-level)")->capture_default_str();
    simulate->add_option("--sigma", truth.sigma, "true effect sd (ou-level)")->capture_default_str();
    simulate->add_option("--units", units, "number of units")->capture_default_str();
    simulate->add_option("--obs", obs, "observations per unit")->capture_default_str();
    simulate->add_option("--dt", dt, "observation spacing")->capture_default_str();
    simulate->add_option("--t0", t0, "first observation time")->capture_default_str();

    // gibbs
    Common gib;
    GibbsConfig gc;
    std::string data_path, strategy, sampler = "builtin", summary_path;
    std::optional<double> p_kappa, p_delta, p_nu, p_lambda, p_l1, p_l2, p_l3, p_l4;
    auto* gibbs = app.add_subcommand("gibbs", "run the Gibbs sampler");
    add_common(gibbs, gib, false);
    gibbs->add_option("--data", data_path, "panel CSV (unit,time,value)")->required();
    gibbs->add_option("--iters", gc.iterations, "sweeps")->capture_default_str();
    gibbs->add_option("--burn-in", gc.burn_in, "burn-in sweeps (printed summary, stranded MH starts)")->capture_default_str();
    gibbs->add_option("--bridge-steps", gc.bridge_steps, "grid steps per bridge")->capture_default_str();
    gibbs->add_flag("--exact-bridges", gc.exact_bridges, "pseudo-marginal MH bridge correction");
    gibbs->add_option("--bridge-max-attempts", gc.bridge.max_attempts, "proposals per bridge before giving up")
        ->capture_default_str();
    gibbs->add_option("--wg-strategy", strategy, "mh, rejection or approx (model default when omitted)");
    gibbs->add_option("--wg-K", gc.wg_K, "sample size of the approx strategy")->capture_default_str();
    bool wg_raw = false;
    gibbs->add_flag("--wg-raw", wg_raw, "plain gamma proposal instead of one re-centred at the conditional mode");
    gibbs->add_flag("--save-effects", gc.save_effects, "append per-unit effect columns");
    gibbs->add_option("--sampler", sampler, "builtin, expfam or general")->capture_default_str();
    gibbs->add_option("--init-alpha", gc.init_alpha);
    gibbs->add_option("--init-beta", gc.init_beta);
    gibbs->add_option("--init-gamma", gc.init_gamma);
    gibbs->add_option("--init-xi", gc.init_xi);
    gibbs->add_option("--prior-kappa", p_kappa, "gamma prior shape on beta^-2");
    gibbs->add_option("--prior-delta", p_delta, "gamma prior rate on beta^-2");
    gibbs->add_option("--prior-nu", p_nu, "gamma prior shape on the effect rate");
    gibbs->add_option("--prior-lambda", p_lambda, "gamma prior rate on the effect rate");
    gibbs->add_option("--prior-lambda1", p_l1, "ou-level: exponential rate on alpha");
    gibbs->add_option("--prior-lambda2", p_l2, "ou-level: rate on beta^-2");
    gibbs->add_option("--prior-lambda3", p_l3, "ou-level: exponential rate on xi");
    gibbs->add_option("--prior-lambda4", p_l4, "ou-level: rate on the effect precision");
    gibbs->add_option("--summary", summary_path, "also write the summary CSV here");

    // em
    Common emc;
    EmConfig ec;
    std::string em_data;
    EmTheta init{1.0, 1.0};
    auto* em = app.add_subcommand("em", "run Monte Carlo EM");
    add_common(em, emc, false);
    em->add_option("--data", em_data, "panel CSV (unit,time,value)")->required();
    em->add_option("--iters", ec.iterations, "EM iterations")->capture_default_str();
    em->add_option("--M", ec.M, "Monte Carlo samples per E-step")->capture_default_str();
    em->add_option("--burn-in", ec.inner_burn_in, "inner-chain burn-in")->capture_default_str();
    em->add_option("--thin", ec.thin, "inner-chain thinning")->capture_default_str();
    em->add_option("--bridge-steps", ec.bridge_steps, "grid steps per bridge")->capture_default_str();
    em->add_flag("--exact-bridges", ec.exact_bridges, "pseudo-marginal MH bridge correction");
    em->add_option("--bridge-max-attempts", ec.bridge.max_attempts, "proposals per bridge before giving up")
        ->capture_default_str();
    em->add_option("--init-beta", init.beta)->capture_default_str();
    em->add_option("--init-gamma", init.gamma)->capture_default_str();
    em->add_option("--beta-lo", ec.beta_lo, "t-diffusion beta search bracket")->capture_default_str();
    em->add_option("--beta-hi", ec.beta_hi)->capture_default_str();

    // summarize
    std::string trace_path, sum_out;
    std::size_t sum_burn = 0;
    std::string sum_config;
    auto* summ = app.add_subcommand("summarize", "posterior means and 95% intervals of a trace");
    summ->add_option("trace", trace_path, "trace CSV")->required();
    summ->add_option("--burn-in", sum_burn, "rows to discard")->capture_default_str();
    summ->add_option("--out", sum_out, "summary CSV path");
    summ->add_option("--config", sum_config, "flat 'key = value' file; flags take precedence");

    std::vector<std::string> args;
    try {
        args = expand_config(argc, argv);
    } catch (const std::exception& e) {
        std::cerr << "sdemix: " << e.what() << '\n';
        return 2;
    }
    std::vector<const char*> cargv;
    for (const auto& a : args) cargv.push_back(a.c_str());
    try {
        app.parse(static_cast<int>(cargv.size()), const_cast<char**>(cargv.data()));
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    }

    try {
        if (*simulate) {
            ModelId id = parse_model_id(sim.model);
            SynthTruth t = default_truth(id);
            t.alpha = truth.alpha;
            t.xi = truth.xi;
            t.sigma = truth.sigma;
            if (s_beta) t.beta = *s_beta;
            if (s_gamma) t.gamma = *s_gamma;
            std::uint64_t seed = resolve_seed(sim);
            SynthPanel sp = synth_generate(id, t, units, obs, dt, seed, t0, sim.threads);
            std::ofstream f;
            write_panel_csv(open_or_stdout(sim.out, f), sp.data, sp.provenance);
            return 0;
        }
        if (*gibbs) {
            ModelId id = parse_model_id(gib.model);
            gc.seed = resolve_seed(gib);
            gc.threads = gib.threads;
            gc.wg_recentre = !wg_raw;
            if (!strategy.empty()) gc.wg_strategy = parse_wg_strategy(strategy);
            PriorSpec pr = default_priors(id);
            if (p_kappa) pr.eta.shape = *p_kappa;
            if (p_delta) pr.eta.rate = *p_delta;
            if (pr.effects_rate) {
                if (p_nu) pr.effects_rate->shape = *p_nu;
                if (p_lambda) pr.effects_rate->rate = *p_lambda;
            }
            if (p_l1) pr.neuronal[0] = *p_l1;
            if (p_l2) pr.neuronal[1] = *p_l2;
            if (p_l3) pr.neuronal[2] = *p_l3;
            if (p_l4) pr.neuronal[3] = *p_l4;
            pr.validate();
            PanelData data = load_panel_csv(data_path);

            DrawTrace tr;
            if (sampler == "builtin") {
                tr = run_chain(id, data, pr, gc);
            } else if (sampler == "expfam") {
                if (id == ModelId::t_diffusion) throw ConfigError("t-diffusion has no exponential-family form");
                if (id == ModelId::ou_level) throw ConfigError("ou-level runs on the builtin sampler");
                tr = run_chain_expfam(builtin_model(id), data, pr, gc);
            } else if (sampler == "general") {
                if (id != ModelId::ou_speed) throw ConfigError("the general sampler ships an ou-speed model only");
                tr = run_chain_general(ou_speed_general(pr), data, gc);
            } else {
                throw ConfigError("unknown sampler '" + sampler + "'");
            }

            std::vector<std::string> prov = {
                "sdemix gibbs model=" + to_string(id) + " sampler=" + sampler + " seed=" + std::to_string(gc.seed),
                "iters=" + std::to_string(gc.iterations) + " bridge_steps=" + std::to_string(gc.bridge_steps) +
                    " exact_bridges=" + (gc.exact_bridges ? "1" : "0") + " wg_strategy=" +
                    to_string(gc.wg_strategy ? *gc.wg_strategy : default_wg_strategy(id)) +
                    " wg_K=" + std::to_string(gc.wg_K) + (gc.wg_recentre ? "" : " wg_raw=1") +
                    " bridge_max_attempts=" + std::to_string(gc.bridge.max_attempts)};
            std::ofstream f;
            write_trace_csv(open_or_stdout(gib.out, f), tr, prov);

            Table t;
            t.columns = tr.columns;
            t.rows = tr.rows;
            std::size_t burn = std::min(gc.burn_in, tr.rows.size() - 1);
            std::vector<SummaryRow> rows = summarize(t, burn);
            if (!summary_path.empty()) {
                std::ofstream sf(summary_path, std::ios::binary);
                if (!sf) throw ConfigError("cannot open '" + summary_path + "' for writing");
                write_summary_csv(sf, rows, {"burn_in=" + std::to_string(burn)});
            }
            if (!gib.out.empty() && gib.out != "-") write_summary_text(std::cout, rows);
            std::cerr << "sdemix: " << diag_line(tr.diag) << '\n';
            return 0;
        }
        if (*em) {
            ModelId id = parse_model_id(emc.model);
            ec.seed = resolve_seed(emc);
            ec.threads = emc.threads;
            PanelData data = load_panel_csv(em_data);
            std::vector<std::string> prov = {
                "sdemix em model=" + to_string(id) + " seed=" + std::to_string(ec.seed),
                "iters=" + std::to_string(ec.iterations) + " M=" + std::to_string(ec.M) +
                    " init_beta=" + format_double(init.beta) + " init_gamma=" + format_double(init.gamma) +
                    " bridge_steps=" + std::to_string(ec.bridge_steps) +
                    " bridge_max_attempts=" + std::to_string(ec.bridge.max_attempts)};
            std::ofstream f;
            std::ostream& out = open_or_stdout(emc.out, f);
            Table head;
            head.columns = {"iter", "beta", "gamma"};
            write_table_csv(out, head, prov);
            out.flush();
            // rows go out as they are produced
            EmState st = run_em(id, data, init, ec, [&](const EmState& s) {
                out << s.k << ',' << format_double(s.theta.beta) << ',' << format_double(s.theta.gamma) << '\n';
                out.flush();
            });
            if (!emc.out.empty() && emc.out != "-")
                std::cout << "beta=" << st.theta.beta << " gamma=" << st.theta.gamma << '\n';
            return 0;
        }
        if (*summ) {
            Table t = load_table_csv(trace_path);
            std::vector<SummaryRow> rows = summarize(t, sum_burn);
            if (!sum_out.empty()) {
                std::ofstream sf(sum_out, std::ios::binary);
                if (!sf) throw ConfigError("cannot open '" + sum_out + "' for writing");
                write_summary_csv(sf, rows, {"trace=" + trace_path + " burn_in=" + std::to_string(sum_burn)});
            }
            write_summary_text(std::cout, rows);
            return 0;
        }
    } catch (const std::exception& e) {
        std::cerr << "sdemix: " << e.what() << '\n';
        return 1;
    }
    return 0;
}

#include "svsdu/calib/calibration.hpp"
#include "svsdu/ctmc.hpp"
#include "svsdu/dgm/network.hpp"
#include "svsdu/error.hpp"
#include "svsdu/heston.hpp"
#include "svsdu/kv.hpp"
#include "svsdu/market/chain.hpp"
#include "svsdu/market/pipeline.hpp"
#include "svsdu/model.hpp"
#include "svsdu/pde/training.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

using namespace svsdu;

namespace {

std::string read_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::Io, "cannot open " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_file(const std::string& path, const std::string& text) {
    std::ofstream out(path);
    if (!out) throw Error(ErrorCode::Io, "cannot write " + path);
    out << text;
}

ModelParams load_params(const std::string& path) {
    return path.empty() ? ModelParams{} : params_from_kv(read_file(path));
}

// records are kv blocks separated by a line "---"
constexpr const char* kRecordSeparator = "---\n";

std::vector<calib::CalibrationResult> read_records(const std::string& path) {
    std::vector<calib::CalibrationResult> out;
    std::istringstream in(read_file(path));
    std::string line, block;
    auto flush = [&] {
        if (block.find('=') != std::string::npos) out.push_back(calib::calibration_result_from_kv(block));
        block.clear();
    };
    while (std::getline(in, line)) {
        if (line == "---") flush();
        else block += line + "\n";
    }
    flush();
    return out;
}

void print_price(const char* label, const ctmc::McPrice& p) {
    std::printf("%s = %s\n%s_se = %s\n", label, format_double(p.price).c_str(), label,
                format_double(p.standard_error).c_str());
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Sticky-extreme stochastic volatility toolkit"};
    app.require_subcommand(1);
    std::uint64_t seed = 1;

    // simulate
    auto* sim = app.add_subcommand("simulate", "simulate sample paths of the chain");
    std::string sim_params, sim_path_out;
    double sim_h = 0.01, sim_horizon = 1.0;
    std::int64_t sim_paths = 1000;
    unsigned threads = 0;
    sim->add_option("--params", sim_params, "model parameter file");
    sim->add_option("--step", sim_h, "lattice step");
    sim->add_option("--horizon", sim_horizon, "simulated time");
    sim->add_option("--paths", sim_paths, "number of paths");
    sim->add_option("--path-out", sim_path_out, "write the transitions of path 0 here");
    sim->add_option("--threads", threads);
    sim->add_option("--seed", seed);

    // price-mc
    auto* pmc = app.add_subcommand("price-mc", "Monte Carlo call price");
    std::string pmc_params;
    double pmc_strike = 100.0, pmc_maturity = 1.0, pmc_h = 0.01;
    std::int64_t pmc_paths = 10000;
    bool pmc_heston = false;
    pmc->add_option("--params", pmc_params, "model parameter file");
    pmc->add_option("--strike", pmc_strike);
    pmc->add_option("--maturity", pmc_maturity);
    pmc->add_option("--step", pmc_h, "lattice step");
    pmc->add_option("--paths", pmc_paths);
    pmc->add_option("--threads", threads);
    pmc->add_flag("--heston", pmc_heston, "also print the Heston reference price");
    pmc->add_option("--seed", seed);

    // train
    auto* trn = app.add_subcommand("train", "train a pricing network");
    std::string trn_config, trn_out = "weights.txt", trn_history, trn_init;
    long trn_iterations = -1;
    trn->add_option("--config", trn_config, "training config file (desk preset when omitted)");
    trn->add_option("--out", trn_out, "weights file");
    trn->add_option("--history", trn_history, "loss history file");
    trn->add_option("--iterations", trn_iterations);
    trn->add_option("--init", trn_init, "continue from these weights");
    trn->add_option("--seed", seed);

    // price-net
    auto* pnet = app.add_subcommand("price-net", "network prices over a strike-maturity grid");
    std::string pnet_weights, pnet_params;
    std::vector<double> pnet_strikes = {80, 90, 100, 110, 120}, pnet_maturities = {0.25, 0.5, 1.0};
    pnet->add_option("--weights", pnet_weights)->required();
    pnet->add_option("--params", pnet_params);
    pnet->add_option("--strikes", pnet_strikes)->delimiter(',');
    pnet->add_option("--maturities", pnet_maturities)->delimiter(',');
    pnet->add_option("--seed", seed);

    // synth-chain
    auto* syn = app.add_subcommand("synth-chain", "network-generated option chain");
    std::string syn_weights, syn_params, syn_out = "chain.csv";
    market::SyntheticSpec spec;
    syn->add_option("--weights", syn_weights)->required();
    syn->add_option("--params", syn_params, "first-day parameters");
    syn->add_option("--days", spec.n_days);
    syn->add_option("--start", spec.start_date);
    syn->add_option("--scale", spec.scale_c);
    syn->add_option("--noise", spec.price_noise);
    syn->add_option("--out", syn_out);
    syn->add_option("--seed", seed);

    // calibrate
    auto* cal = app.add_subcommand("calibrate", "daily calibration of a chain");
    std::string cal_weights, cal_chain, cal_mode = "all", cal_out = "records.txt", cal_report, cal_oos_report,
                                        cal_valuation;
    market::CalibrateOptions copts;
    double cal_rate = std::nan("");
    bool cal_strict = false, cal_no_filter = false;
    cal->add_option("--weights", cal_weights)->required();
    cal->add_option("--chain", cal_chain)->required();
    cal->add_option("--mode", cal_mode, "all, by-maturity or by-moneyness");
    cal->add_option("--c-init", copts.c_init);
    cal->add_option("--h-c", copts.scaling.h, "grid step of the scaling search");
    cal->add_option("--budget", copts.scaling.budget, "probes of the scaling search");
    cal->add_option("--max-outer", copts.lm.max_outer);
    cal->add_option("--lambda0", copts.lm.lambda0);
    cal->add_option("--rate", cal_rate, "constant rate for every quote");
    cal->add_option("--valuation-date", cal_valuation, "count days to expiry from this date when filtering");
    cal->add_flag("--strict", cal_strict, "fail on malformed rows");
    cal->add_flag("--no-filter", cal_no_filter);
    cal->add_option("--out", cal_out, "daily records");
    cal->add_option("--report", cal_report, "in-sample bucket report");
    cal->add_option("--oos-report", cal_oos_report, "out-of-sample bucket report");
    cal->add_option("--seed", seed);

    // report
    auto* rep = app.add_subcommand("report", "tables and plot data from calibration records or a chain");
    std::string rep_records, rep_chain, rep_out;
    rep->add_option("--records", rep_records);
    rep->add_option("--chain", rep_chain, "bucket table of a chain (filtered)");
    rep->add_option("--out", rep_out, "plot data file");
    rep->add_option("--seed", seed);

    CLI11_PARSE(app, argc, argv);

    try {
        if (*sim) {
            const ModelParams p = validate_params(load_params(sim_params));
            ctmc::McConfig cfg;
            cfg.n_paths = sim_paths;
            cfg.h = sim_h;
            cfg.seed = seed;
            cfg.threads = threads;
            const auto terminal = ctmc::simulate_terminal_assets(p, sim_horizon, cfg);
            double mean = 0.0;
            for (double s : terminal) mean += s;
            mean /= static_cast<double>(terminal.size());
            const auto occ = ctmc::occupation_fractions(p, sim_horizon, cfg);
            std::printf("paths = %lld\nmean_terminal = %s\ndiscounted_mean = %s\nat_max = %s\nat_min = %s\n",
                        static_cast<long long>(sim_paths), format_double(mean).c_str(),
                        format_double(mean * std::exp(-p.r * sim_horizon)).c_str(), format_double(occ.at_max).c_str(),
                        format_double(occ.at_min).c_str());
            if (!sim_path_out.empty()) {
                ctmc::SimulationOptions so;
                so.h = sim_h;
                so.record_path = true;
                ctmc::write_path_csv(ctmc::simulate_path(p, sim_horizon, so, seed, 0).path, sim_path_out);
            }
        } else if (*pmc) {
            const ModelParams p = validate_params(load_params(pmc_params));
            ContractSpec c;
            c.strike = pmc_strike;
            c.maturity = pmc_maturity;
            ctmc::McConfig cfg;
            cfg.n_paths = pmc_paths;
            cfg.h = pmc_h;
            cfg.seed = seed;
            cfg.threads = threads;
            const auto st = ctmc::mc_statistics(p, c, cfg);
            print_price("call", st.call);
            print_price("put", st.put);
            print_price("discounted_asset", st.discounted_asset);
            if (pmc_heston) {
                std::printf("heston_call = %s\n",
                            format_double(heston::heston_call(heston::from_model(p), pmc_strike, c.tau())).c_str());
            }
        } else if (*trn) {
            pde::TrainConfig cfg = trn_config.empty() ? pde::TrainConfig::desk()
                                                      : pde::train_config_from_kv(read_file(trn_config));
            if (trn->count("--seed")) cfg.seed = seed;
            if (trn_iterations > 0) cfg.iterations = trn_iterations;
            if (!trn_history.empty()) cfg.history_path = trn_history;
            const auto res = trn_init.empty() ? pde::train(cfg) : pde::train(cfg, dgm::load_weights(trn_init));
            dgm::save_weights(res.weights, trn_out);
            std::printf("initial_smoothed = %s\nfinal_smoothed = %s\ntrend_ok = %d\n",
                        format_double(res.initial_smoothed).c_str(), format_double(res.final_smoothed).c_str(),
                        res.trend_ok ? 1 : 0);
            if (!res.trend_ok) std::fprintf(stderr, "warning: smoothed loss did not halve\n");
        } else if (*pnet) {
            const auto w = dgm::load_weights(pnet_weights);
            ModelParams p = load_params(pnet_params);
            p.variant = w.cfg.variant;
            std::printf("strike,maturity,price\n");
            for (double T : pnet_maturities) {
                for (double K : pnet_strikes) {
                    ContractSpec c;
                    c.strike = K;
                    c.maturity = T;
                    std::printf("%s,%s,%s\n", format_double(K).c_str(), format_double(T).c_str(),
                                format_double(dgm::forward(w, make_raw_inputs(p, c))).c_str());
                }
            }
        } else if (*syn) {
            const auto w = dgm::load_weights(syn_weights);
            spec.truth = load_params(syn_params);
            spec.seed = seed;
            const auto quotes = market::synthetic_chain(w, spec);
            market::write_chain(quotes, syn_out);
            std::printf("quotes = %zu\n", quotes.size());
        } else if (*cal) {
            const auto w = dgm::load_weights(cal_weights);
            auto loaded = market::load_chain(cal_chain, cal_strict);
            for (const auto& msg : loaded.warnings) std::fprintf(stderr, "warning: %s\n", msg.c_str());
            if (!std::isnan(cal_rate)) {
                for (auto& q : loaded.quotes) q.rate = cal_rate;
            }
            const auto quotes = cal_no_filter
                                    ? loaded.quotes
                                    : market::filter_chain(loaded.quotes, cal_valuation.empty()
                                                                              ? std::nullopt
                                                                              : std::optional<std::string>(cal_valuation));
            copts.mode = market::parse_group_mode(cal_mode);
            const auto res = market::run_pipeline(w, quotes, copts);

            std::ostringstream records;
            for (const auto& f : res.fits) {
                records << "group = " << f.group << '\n' << calib::to_kv(f.fit) << kRecordSeparator;
                for (const auto& msg : f.fit.warnings) std::fprintf(stderr, "warning: %s %s\n", f.fit.date.c_str(), msg.c_str());
            }
            write_file(cal_out, records.str());

            const auto in = res.in_sample.metrics();
            std::printf("quotes = %zu\nfits = %zu\nin_sample_ape = %s\nin_sample_aae = %s\n", quotes.size(),
                        res.fits.size(), format_double(in.ape).c_str(), format_double(in.aae).c_str());
            if (!res.out_of_sample.quotes.empty()) {
                const auto oos = res.out_of_sample.metrics();
                std::printf("out_of_sample_ape = %s\nout_of_sample_aae = %s\n", format_double(oos.ape).c_str(),
                            format_double(oos.aae).c_str());
            }
            if (!cal_report.empty()) {
                write_file(cal_report, market::bucket_report(res.in_sample.quotes, res.in_sample.model).to_csv());
            }
            if (!cal_oos_report.empty() && !res.out_of_sample.quotes.empty()) {
                write_file(cal_oos_report,
                           market::bucket_report(res.out_of_sample.quotes, res.out_of_sample.model).to_csv());
            }
        } else if (*rep) {
            if (!rep_chain.empty()) {
                const auto quotes = market::filter_chain(market::load_chain(rep_chain).quotes);
                std::cout << market::bucket_report(quotes).to_csv();
            }
            if (!rep_records.empty()) {
                std::ostringstream table;
                table << "date,variant,C,rho,kappa,theta,sigma,eta,v,xi,DD,DU,rmse,ape,aae,status\n";
                for (const auto& r : read_records(rep_records)) {
                    const auto& p = r.params;
                    table << r.date << ',' << to_string(r.variant) << ',' << format_double(r.C);
                    for (double v : {p.rho, p.kappa, p.theta, p.sigma, p.eta, p.v0, p.xi, r.dd, r.du, r.rmse,
                                     r.in_sample.ape, r.in_sample.aae}) {
                        table << ',' << format_double(v);
                    }
                    table << ',' << calib::to_string(r.status) << '\n';
                }
                if (rep_out.empty()) std::cout << table.str();
                else write_file(rep_out, table.str());
            }
        }
    } catch (const Error& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    }
    return 0;
}

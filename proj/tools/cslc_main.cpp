#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>

#include "CLI11.hpp"

#include "cslc/diagnostics.hpp"
#include "cslc/fft.hpp"
#include "cslc/io.hpp"
#include "cslc/phi4.hpp"
#include "cslc/sampler.hpp"
#include "cslc/score_matching.hpp"
#include "cslc/threading.hpp"

namespace {

using cslc::FieldStack;

struct PlanArg {
    int j_oct = 3;
    int m = 2;
};

PlanArg parse_plan(const std::string& s) {
    PlanArg p;
    auto comma = s.find(',');
    if (comma == std::string::npos) throw CLI::ValidationError("--plan", "expected J_oct,M (e.g. 3,2)");
    try {
        p.j_oct = std::stoi(s.substr(0, comma));
        p.m = std::stoi(s.substr(comma + 1));
    } catch (...) {
        throw CLI::ValidationError("--plan", "expected J_oct,M (e.g. 3,2)");
    }
    return p;
}

void write_csv_spectrum(const std::string& path, const cslc::RadialSpectrum& s) {
    std::ofstream os(path);
    os << "bin_lo_rad,bin_hi_rad,mean_power,mode_count\n";
    os.precision(17);
    for (size_t b = 0; b < s.power.size(); ++b)
        os << s.edges[b] << "," << s.edges[b + 1] << "," << s.power[b] << "," << s.count[b] << "\n";
}

void write_csv_histogram(const std::string& path, const cslc::Histogram& h) {
    std::ofstream os(path);
    os << "bin_lo_value,bin_hi_value,density\n";
    os.precision(17);
    for (size_t b = 0; b < h.density.size(); ++b) {
        double lo = h.lo + h.bin_width() * static_cast<double>(b);
        os << lo << "," << lo + h.bin_width() << "," << h.density[b] << "\n";
    }
}

void write_csv_eigs(const std::string& path, const cslc::ExtremalEigs& e) {
    std::ofstream os(path);
    os << "sample,lambda_min,lambda_max\n";
    os.precision(17);
    for (size_t i = 0; i < e.lambda_min.size(); ++i)
        os << i << "," << e.lambda_min[i] << "," << e.lambda_max[i] << "\n";
}

void write_csv_table(const std::string& path, const cslc::PotentialTable& t, const std::string& value_name) {
    std::ofstream os(path);
    os << "t_value," << value_name << "\n";
    os.precision(17);
    for (size_t i = 0; i < t.values.size(); ++i) {
        double x = t.lo + (t.hi - t.lo) * static_cast<double>(i) / static_cast<double>(t.values.size() - 1);
        os << x << "," << t.values[i] << "\n";
    }
}

FieldStack apply_sqrt_shift(const FieldStack& data, double& offset) {
    const auto& raw = data.raw();
    offset = *std::min_element(raw.begin(), raw.end());
    FieldStack out(data.count(), data.side());
    for (size_t i = 0; i < raw.size(); ++i) out.raw()[i] = std::sqrt(raw[i] - offset);
    return out;
}

void undo_sqrt_shift(FieldStack& data, double offset) {
    for (auto& v : data.raw()) v = v * v + offset;
}

int run(int argc, char** argv) {
    CLI::App app{"Conditionally strongly log-concave generative models of 2D stationary fields"};
    app.require_subcommand(1);
    int threads = 0;
    app.add_option("--threads", threads, "worker threads (default: hardware)");

    // gen-phi4
    auto* gen = app.add_subcommand("gen-phi4", "sample a phi^4 training dataset by MALA");
    double beta = 0.68;
    int side = 32, n = 1000;
    uint64_t seed = 1;
    bool symmetry_break = false;
    double step0 = 0.1;
    std::string out_path;
    gen->add_option("--beta", beta, "inverse temperature")->required();
    gen->add_option("--side", side, "lattice side (power of two)")->required();
    gen->add_option("--n", n, "number of samples")->required();
    gen->add_option("--seed", seed, "master seed");
    gen->add_option("--step", step0, "initial MALA step size");
    gen->add_flag("--symmetry-break", symmetry_break, "keep positive-mean samples only (reflection)");
    gen->add_option("--out", out_path, "output .fld path")->required();

    // learn
    auto* learn = app.add_subcommand("learn", "fit the multiscale model by closed-form score matching");
    std::string data_path, model_path, plan_str = "3,2", preprocess = "none";
    int bumps = 16;
    double ridge = 0.0;
    learn->add_option("--data", data_path, "training .fld container")->required();
    learn->add_option("--plan", plan_str, "wavelet packet plan J_oct,M (default 3,2)");
    learn->add_option("--bumps", bumps, "scalar potential bumps per scale");
    learn->add_option("--ridge", ridge, "ridge on the preconditioned solve (default 0)");
    learn->add_option("--preprocess", preprocess, "none | sqrt-shift")->check(CLI::IsMember({"none", "sqrt-shift"}));
    learn->add_option("--out", model_path, "output model JSON")->required();

    // sample
    auto* sample = app.add_subcommand("sample", "generate fields from a learned model (MALA cascade)");
    std::string smodel, sout;
    int sn = 100, steps = 300, coarse_steps = 0;
    uint64_t sseed = 1;
    sample->add_option("--model", smodel, "model JSON")->required();
    sample->add_option("--n", sn, "number of fields")->required();
    sample->add_option("--seed", sseed, "master seed");
    sample->add_option("--steps", steps, "MALA steps per scale");
    sample->add_option("--coarse-steps", coarse_steps, "MALA steps at the coarsest scale (default 4x steps)");
    sample->add_option("--out", sout, "output .fld path")->required();

    // diagnose
    auto* diag = app.add_subcommand("diagnose", "spectra, marginals and CSLC checks");
    std::string ddata, dgen, dmodel, dout_dir;
    int dbins = 100;
    diag->add_option("--data", ddata, "training .fld container")->required();
    diag->add_option("--gen", dgen, "generated .fld container")->required();
    diag->add_option("--model", dmodel, "model JSON (enables Hessian/CSLC checks)");
    diag->add_option("--bins", dbins, "histogram bins");
    diag->add_option("--out-dir", dout_dir, "output directory for CSV/JSON")->required();

    // free-energy
    auto* fecmd = app.add_subcommand("free-energy", "fit free energies and export the global energy");
    std::string femodel, fedata, feout;
    fecmd->add_option("--model", femodel, "model JSON")->required();
    fecmd->add_option("--data", fedata, "training .fld container")->required();
    fecmd->add_option("--out", feout, "output JSON (with V_j tables)")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        app.exit(e);
        return 0;
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }
    if (threads > 0) cslc::set_default_thread_count(threads);

    if (*gen) {
        if (!cslc::is_power_of_two(side)) {
            std::cerr << "error: --side must be a power of two (got " << side << ")\n";
            return 2;
        }
        if (beta <= 0) {
            std::cerr << "error: --beta must be positive\n";
            return 2;
        }
        cslc::Phi4Params p{beta, side, symmetry_break};
        cslc::MalaConfig mcmc;
        mcmc.step_size = step0;
        cslc::Phi4Dataset ds = cslc::sample_phi4(p, n, mcmc, seed);
        cslc::write_field_container(out_path, ds.fields);
        nlohmann::json manifest = {{"beta", beta},
                                   {"side", side},
                                   {"n", n},
                                   {"seed", seed},
                                   {"symmetry_break", symmetry_break},
                                   {"burn_in", ds.burn_in},
                                   {"thinning", ds.thinning},
                                   {"acceptance", ds.acceptance},
                                   {"tau", ds.tau},
                                   {"step_size", ds.step_size},
                                   {"chains", ds.chains},
                                   {"kernel", "mala"}};
        cslc::write_json(out_path + ".manifest.json", manifest);
        std::cout << "wrote " << n << " samples to " << out_path << " (acceptance " << ds.acceptance << ", tau "
                  << ds.tau << ")\n";
        return 0;
    }

    if (*learn) {
        PlanArg pa = parse_plan(plan_str);
        FieldStack data = cslc::read_field_container(data_path);
        cslc::PreprocessInfo prep;
        if (preprocess == "sqrt-shift") {
            prep.type = "sqrt-shift";
            data = apply_sqrt_shift(data, prep.offset);
        }
        cslc::PacketPlan plan(data.side(), pa.j_oct, pa.m);
        cslc::LearnConfig cfg;
        cfg.n_bumps = bumps;
        cfg.ridge = ridge;
        cslc::LearnedModel model = cslc::learn_all(data, plan, cfg);
        model.preprocess = prep;
        cslc::save_model(model_path, model);
        cslc::write_json(model_path + ".report.json", cslc::report_to_json(model.report));
        std::cout << "learned " << plan.n_bands() << " conditional scales + coarsest; model written to " << model_path
                  << "\n";
        return 0;
    }

    if (*sample) {
        cslc::LearnedModel model = cslc::load_model(smodel);
        cslc::MalaConfig cfg;
        cfg.steps = steps;
        cfg.coarse_steps = coarse_steps;
        cslc::CascadeResult res = cslc::sample_cascade(model, sn, cfg, sseed);
        if (model.preprocess.type == "sqrt-shift") undo_sqrt_shift(res.fields, model.preprocess.offset);
        cslc::write_field_container(sout, res.fields);
        nlohmann::json scales = nlohmann::json::array();
        for (const auto& s : res.per_scale)
            scales.push_back({{"j", s.j},
                              {"steps", s.j == 0 ? (coarse_steps > 0 ? coarse_steps : 4 * steps) : steps},
                              {"acceptance", s.mean_acceptance},
                              {"step_size", s.mean_step},
                              {"clamped", s.clamped},
                              {"chains", s.chains}});
        cslc::write_json(sout + ".report.json",
                         {{"n", sn}, {"seed", sseed}, {"steps", steps}, {"per_scale", scales}});
        std::cout << "sampled " << sn << " fields to " << sout << "\n";
        return 0;
    }

    if (*diag) {
        namespace fs = std::filesystem;
        fs::create_directories(dout_dir);
        FieldStack train = cslc::read_field_container(ddata);
        FieldStack gen_fields = cslc::read_field_container(dgen);
        if (train.side() != gen_fields.side()) throw cslc::DataError("diagnose: dataset sides differ");

        cslc::RadialSpectrum sp_train = cslc::radial_power_spectrum(train);
        cslc::RadialSpectrum sp_gen = cslc::radial_power_spectrum(gen_fields);
        write_csv_spectrum(dout_dir + "/spectrum_train.csv", sp_train);
        write_csv_spectrum(dout_dir + "/spectrum_gen.csv", sp_gen);

        auto [mn, mx] = std::minmax_element(train.raw().begin(), train.raw().end());
        double lo = *mn, hi = *mx;
        for (double v : gen_fields.raw()) {
            lo = std::min(lo, v);
            hi = std::max(hi, v);
        }
        cslc::Histogram h_train = cslc::marginal_histogram(train, dbins, lo, hi);
        cslc::Histogram h_gen = cslc::marginal_histogram(gen_fields, dbins, lo, hi);
        write_csv_histogram(dout_dir + "/marginal_train.csv", h_train);
        write_csv_histogram(dout_dir + "/marginal_gen.csv", h_gen);

        nlohmann::json summary;
        summary["marginal_l1"] = cslc::l1_distance(h_train, h_gen);
        summary["spectrum_parseval_train"] = sp_train.parseval_sum();
        summary["spectrum_mean_energy_train"] = sp_train.mean_energy;
        double max_rel = 0, total_power = sp_train.parseval_sum();
        nlohmann::json per_bin = nlohmann::json::array();
        for (size_t b = 0; b < sp_train.power.size(); ++b) {
            double pt = sp_train.power[b], pg = sp_gen.power[b];
            double share = pt * static_cast<double>(sp_train.count[b]) / total_power;
            double rel = pt > 0 ? std::abs(pg - pt) / pt : 0.0;
            per_bin.push_back({{"bin", b}, {"train", pt}, {"gen", pg}, {"rel_err", rel}, {"power_share", share}});
            if (share >= 0.01) max_rel = std::max(max_rel, rel);
        }
        summary["spectrum_rel_err_major_bins"] = max_rel;
        summary["spectrum_bins"] = per_bin;

        if (!dmodel.empty()) {
            cslc::LearnedModel model = cslc::load_model(dmodel);
            int nh = std::min(32, train.count());
            std::vector<cslc::Decomposition> decs(static_cast<size_t>(nh));
            for (int i = 0; i < nh; ++i) decs[static_cast<size_t>(i)] = cslc::decompose(train.field(i), model.plan);
            nlohmann::json scales = nlohmann::json::array();
            std::vector<cslc::ScaleMixing> mixing;
            for (int j = 1; j <= model.plan.n_bands(); ++j) {
                cslc::ExtremalEigs ee = cslc::conditional_hessian_extremes(model.cond[static_cast<size_t>(j - 1)],
                                                                           model.plan, decs);
                write_csv_eigs(dout_dir + "/hessian_eigs_scale_" + std::to_string(j) + ".csv", ee);
                double wmin = *std::min_element(ee.lambda_min.begin(), ee.lambda_min.end());
                cslc::EquivalentPotential ep =
                    cslc::equivalent_scalar_potential(model.cond[static_cast<size_t>(j - 1)], model.plan);
                write_csv_table(dout_dir + "/equivalent_potential_scale_" + std::to_string(j) + ".csv", ep.table,
                                "v0_energy");

                // one conditional chain per scale: autocorrelation trace + mixing time
                cslc::Field2D low = cslc::partial_reconstruct_low(decs[0], model.plan, j);
                cslc::ConditioningView view{&low, model.plan.same_grid(j, j + 1) ? &decs[0].bands[static_cast<size_t>(j)]
                                                                                 : nullptr};
                cslc::MalaConfig mcfg;
                mcfg.steps = 4000;
                mcfg.pre_adapt_windows = 40;
                mcfg.trace_coords = 24;
                mcfg.seed = 1234 + static_cast<uint64_t>(j);
                auto [band, st] = cslc::sample_conditional(model.cond[static_cast<size_t>(j - 1)], view, model.plan, mcfg);
                cslc::ChainTrace trace;
                trace.coords = std::move(st.coord_traces);
                cslc::ScaleMixing sm = cslc::mixing_scale(j, model.plan.band(j).dim(),
                                                          std::span<const cslc::ChainTrace>(&trace, 1));
                mixing.push_back(sm);
                {
                    // pooled autocorrelation of the recorded coordinates
                    std::ofstream os(dout_dir + "/autocorrelation_scale_" + std::to_string(j) + ".csv");
                    os << "lag_steps,autocorrelation\n";
                    os.precision(17);
                    std::vector<double> pooled;
                    for (const auto& series : trace.coords) {
                        auto acf = cslc::normalized_autocorrelation(series, static_cast<int>(series.size() / 2));
                        if (pooled.empty()) pooled.assign(acf.size(), 0.0);
                        for (size_t t = 0; t < acf.size() && t < pooled.size(); ++t)
                            pooled[t] += acf[t] / static_cast<double>(trace.coords.size());
                    }
                    for (size_t t = 0; t < pooled.size(); ++t) os << t << "," << pooled[t] << "\n";
                }
                scales.push_back({{"j", j},
                                  {"lambda_min_worst", wmin},
                                  {"equiv_potential_min_second", ep.min_second},
                                  {"equiv_potential_convex", ep.convex_central},
                                  {"tau", sm.tau},
                                  {"tau_fit_r2", sm.r2}});
            }
            summary["cslc_scales"] = scales;
        }
        cslc::write_json(dout_dir + "/summary.json", summary);
        std::cout << "diagnostics written to " << dout_dir << " (marginal L1 " << summary["marginal_l1"] << ")\n";
        return 0;
    }

    if (*fecmd) {
        cslc::LearnedModel model = cslc::load_model(femodel);
        FieldStack data = cslc::read_field_container(fedata);
        if (model.preprocess.type == "sqrt-shift") {
            double off = model.preprocess.offset;
            for (auto& v : data.raw()) v = std::sqrt(v - off);
        }
        std::vector<cslc::Decomposition> decs(static_cast<size_t>(data.count()));
        cslc::parallel_for(static_cast<size_t>(data.count()),
                           [&](size_t i) { decs[i] = cslc::decompose(data.field(static_cast<int>(i)), model.plan); });
        std::vector<cslc::FreeEnergyParams> fes;
        cslc::FreeEnergyConfig fcfg;
        for (int j = 1; j <= model.plan.n_bands(); ++j)
            fes.push_back(cslc::learn_free_energy(model.cond[static_cast<size_t>(j - 1)], decs, model.plan, fcfg));
        cslc::GlobalEnergy ge = cslc::assemble_global_energy(model, fes);

        nlohmann::json out;
        out["free_energies"] = nlohmann::json::array();
        for (const auto& fe : ge.free_params) out["free_energies"].push_back(cslc::free_energy_to_json(fe));
        out["potentials"] = nlohmann::json::array();
        double v0 = 0;
        for (size_t lvl = 0; lvl < ge.potentials.size(); ++lvl) {
            const auto& t = ge.potentials[lvl];
            auto [clo, chi] = ge.central80[lvl];
            double norm = t.max_abs_on(clo, chi);
            if (lvl == 0) v0 = norm;
            out["potentials"].push_back({{"level", lvl},
                                         {"lo", t.lo},
                                         {"hi", t.hi},
                                         {"values", t.values},
                                         {"central80_lo", clo},
                                         {"central80_hi", chi},
                                         {"max_abs_central80", norm},
                                         {"ratio_to_v0", v0 > 0 ? norm / v0 : 0.0}});
        }
        cslc::write_json(feout, out);
        std::cout << "free-energy decomposition written to " << feout << "\n";
        return 0;
    }
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    try {
        return run(argc, argv);
    } catch (const CLI::ParseError&) {
        return 2;
    } catch (const cslc::NumericalError& e) {
        std::cerr << "numerical error: " << e.what() << "\n";
        return 4;
    } catch (const cslc::DataError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return 3;
    } catch (const std::invalid_argument& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    }
}

#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "peridot/backend.hpp"
#include "peridot/construction.hpp"
#include "peridot/errors.hpp"
#include "peridot/perm.hpp"
#include "peridot/proper.hpp"
#include "peridot/simnet.hpp"

#include "bundled_scenarios.hpp"

namespace {

using nlohmann::json;
using namespace peridot;

constexpr int kExitOk = 0;
constexpr int kExitUsage = 2;
constexpr int kExitCheckFailed = 3;

json read_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw ValidationError("cannot open " + path);
    }
    json j;
    in >> j;
    return j;
}

void write_text(const std::string& path, const std::string& text) {
    std::ofstream out(path);
    if (!out) {
        throw ValidationError("cannot write " + path);
    }
    out << text;
}

// Stable output: sorted keys via nlohmann's default object ordering, fixed
// indentation, newline-terminated.
std::string dump_stable(const json& j) {
    return j.dump(2) + "\n";
}

json resolve_scenario(const std::string& name_or_path) {
    if (name_or_path == "nonce-recovery") {
        return json::parse(bundled::kNonceRecoveryScenario);
    }
    if (name_or_path == "retroactive") {
        return json::parse(bundled::kRetroactiveScenario);
    }
    return read_json_file(name_or_path);
}

struct IdentifyRun {
    std::vector<Attribution> attributions;
    Metrics metrics;
    bool have_metrics = false;
};

IdentifyRun run_identify(const std::vector<PacketEvent>& trace,
                         const std::vector<DeviceInfo>& devices, const EngineConfig& config,
                         const std::vector<TruthRecord>* truth) {
    std::vector<DeviceRecord> records;
    records.reserve(devices.size());
    for (const auto& info : devices) {
        records.push_back(DeviceRecord::from_info(info));
    }
    IdentificationEngine engine(std::move(records), config);
    IdentifyRun run;
    for (const auto& packet : trace) {
        auto out = engine.observe(packet);
        run.attributions.insert(run.attributions.end(), out.begin(), out.end());
    }
    auto flushed = engine.finalize();
    run.attributions.insert(run.attributions.end(), flushed.begin(), flushed.end());
    std::sort(run.attributions.begin(), run.attributions.end(),
              [](const Attribution& a, const Attribution& b) { return a.obs_index < b.obs_index; });
    if (truth != nullptr) {
        run.metrics = engine_metrics(*truth, run.attributions);
        run.have_metrics = true;
    }
    return run;
}

std::vector<PacketEvent> read_trace(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw ValidationError("cannot open " + path);
    }
    std::vector<PacketEvent> trace;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) {
            continue;
        }
        trace.push_back(trace_line_parse(json::parse(line)));
    }
    return trace;
}

std::vector<TruthRecord> read_truth(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw ValidationError("cannot open " + path);
    }
    std::vector<TruthRecord> truth;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) {
            continue;
        }
        truth.push_back(truth_line_parse(json::parse(line)));
    }
    return truth;
}

int reproduce_sigfox() {
    const PlanReport report = plan_parameters(38, 50, 12, 32);
    std::cout << plan_table(report);
    bool ok = report.p == 5'497'554'151ULL;
    ok = ok && report.bits_saved == 6;
    ok = ok && std::abs(report.nonce_reuse_factor - 67.1e6) / 67.1e6 < 0.005;
    ok = ok && std::abs(report.device_count_delta - 0.28) < 0.01;
    std::cout << (ok ? "sigfox plan: OK\n" : "sigfox plan: MISMATCH\n");
    return ok ? kExitOk : kExitCheckFailed;
}

int reproduce_bound_8_2() {
    const SearchResult result = exhaustive_max_search(8, 2);
    std::cout << "max (8,2)-proper set size: " << result.max_m << "\n";
    return result.max_m == 3 ? kExitOk : kExitCheckFailed;
}

int reproduce_construction_sweep() {
    std::size_t checked = 0;
    for (std::uint64_t p = 2; p <= 10'000; ++p) {
        if (!is_prime_u64(p)) {
            continue;
        }
        for (std::uint64_t l = 1; p * l <= 10'000; ++l) {
            if ((p - 1) % l != 0) {
                continue;
            }
            ProperSet set = construct(p, l);
            const auto result = verify_proper(set.members, set.q, set.l);
            if (!result.proper || set.size() != upper_bound(set.q, set.l)) {
                std::cout << "FAILED at p=" << p << " l=" << l << "\n";
                return kExitCheckFailed;
            }
            ++checked;
        }
    }
    std::cout << "verified " << checked << " constructed sets proper and quasiperfect\n";
    return kExitOk;
}

int reproduce_nonce_recovery() {
    const auto scenario = ScenarioConfig::from_json(json::parse(bundled::kNonceRecoveryScenario));
    const ScenarioResult sim = run_scenario(scenario);
    const auto config = EngineConfig::from_json(json::parse(bundled::kNonceRecoveryEngineConfig));
    const IdentifyRun run = run_identify(sim.trace, sim.devices, config, &sim.truth);
    bool ok = sim.trace.size() == 2 && sim.trace[0].cn == 77 && sim.trace[1].cn == 9;
    for (const auto& attr : run.attributions) {
        ok = ok && attr.device_id == "dev-001";
    }
    ok = ok && run.attributions.size() == 2;
    ok = ok && recover_beta(21, 110, 77, 9) == 2;
    std::cout << (ok ? "nonce-recovery: 77 -> 9 attributed to increment 21 (beta = 2)\n"
                     : "nonce-recovery: MISMATCH\n");
    return ok ? kExitOk : kExitCheckFailed;
}

int reproduce_retroactive() {
    const auto scenario = ScenarioConfig::from_json(json::parse(bundled::kRetroactiveScenario));
    const ScenarioResult sim = run_scenario(scenario);
    const auto config = EngineConfig::from_json(json::parse(bundled::kRetroactiveEngineConfig));
    const IdentifyRun run = run_identify(sim.trace, sim.devices, config, &sim.truth);

    std::vector<Elem> expect_trace{1, 2, 10, 9, 3, 7, 5, 3, 4};
    bool ok = sim.trace.size() == expect_trace.size();
    for (std::size_t i = 0; ok && i < expect_trace.size(); ++i) {
        ok = sim.trace[i].cn == expect_trace[i];
    }

    std::vector<Elem> inc_cns, dec_cns;
    std::size_t delay_cn5 = 0;
    for (const auto& attr : run.attributions) {
        if (attr.device_id == "dev-000") {
            inc_cns.push_back(attr.cn);
        } else if (attr.device_id == "dev-001") {
            dec_cns.push_back(attr.cn);
        } else {
            ok = false;
        }
        if (attr.cn == 5) {
            delay_cn5 = attr.delay_packets;
        }
    }
    ok = ok && inc_cns == std::vector<Elem>{1, 2, 3, 4};
    ok = ok && dec_cns == std::vector<Elem>{10, 9, 7, 5, 3};
    ok = ok && delay_cn5 >= 1;
    std::cout << (ok ? "retroactive: attribution inc={1,2,3,4}, dec={10,9,7,5,3}, CN 5 delayed\n"
                     : "retroactive: MISMATCH\n");
    return ok ? kExitOk : kExitCheckFailed;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"PERIDOT permutation-code toolkit"};
    app.require_subcommand(1);

    // construct
    auto* cmd_construct = app.add_subcommand("construct", "Build the quasiperfect increment set");
    std::uint64_t opt_p = 0, opt_l = 0;
    std::string opt_out;
    cmd_construct->add_option("--p", opt_p, "prime p")->required();
    cmd_construct->add_option("--l", opt_l, "maximum gap l, must divide p-1")->required();
    cmd_construct->add_option("--out", opt_out, "output file (default stdout)");

    // verify
    auto* cmd_verify = app.add_subcommand("verify", "Verify a permutation set file");
    std::string opt_set_path;
    std::optional<std::uint64_t> opt_l_override;
    cmd_verify->add_option("--set", opt_set_path, "ProperSet JSON file")->required();
    cmd_verify->add_option("--l", opt_l_override, "override l from the file");
    bool opt_certificate = false;
    cmd_verify->add_flag("--certificate", opt_certificate, "emit the follower-set certificate");

    // search
    auto* cmd_search = app.add_subcommand("search", "Exhaustive maximum proper-set search");
    std::uint64_t opt_q = 0;
    std::uint64_t opt_search_l = 0;
    bool opt_override_guard = false;
    std::optional<std::uint64_t> opt_limit;
    cmd_search->add_option("--q", opt_q, "alphabet size")->required();
    cmd_search->add_option("--l", opt_search_l, "maximum gap")->required();
    cmd_search->add_flag("--override-guard", opt_override_guard, "search beyond the q guard");
    cmd_search->add_option("--limit", opt_limit, "stop once a set of this size is found");
    std::string opt_search_out;
    cmd_search->add_option("--out", opt_search_out, "output file (default stdout)");

    // bound
    auto* cmd_bound = app.add_subcommand("bound", "Print the proper-set size bound floor((q-1)/l)");
    std::uint64_t opt_bq = 0, opt_bl = 0;
    cmd_bound->add_option("--q", opt_bq)->required();
    cmd_bound->add_option("--l", opt_bl)->required();

    // plan
    auto* cmd_plan = app.add_subcommand("plan", "Derive protocol parameters for a CN bit budget");
    unsigned opt_cn_bits = 0;
    std::uint64_t opt_plan_l = 0;
    unsigned opt_sn_bits = 12, opt_id_bits = 32;
    bool opt_plan_json = false;
    cmd_plan->add_option("--cn-bits", opt_cn_bits)->required();
    cmd_plan->add_option("--l", opt_plan_l)->required();
    cmd_plan->add_option("--sn-bits", opt_sn_bits);
    cmd_plan->add_option("--id-bits", opt_id_bits);
    cmd_plan->add_flag("--json", opt_plan_json, "emit JSON instead of the table");

    // simulate
    auto* cmd_simulate = app.add_subcommand("simulate", "Run a scenario, write trace + truth");
    std::string opt_scenario, opt_trace_out = "trace.jsonl", opt_truth_out = "truth.jsonl",
                opt_devices_out = "devices.json";
    std::optional<std::uint64_t> opt_seed;
    cmd_simulate->add_option("--scenario", opt_scenario, "scenario JSON file or bundled name")
        ->required();
    cmd_simulate->add_option("--trace", opt_trace_out);
    cmd_simulate->add_option("--truth", opt_truth_out);
    cmd_simulate->add_option("--devices", opt_devices_out);
    cmd_simulate->add_option("--seed", opt_seed, "override the scenario seed");

    // identify
    auto* cmd_identify = app.add_subcommand("identify", "Attribute a trace to devices");
    std::string opt_trace_in, opt_devices_in, opt_config, opt_attrib_out = "attributions.jsonl",
                opt_metrics_out, opt_truth_in;
    std::optional<double> opt_eps_override;
    std::optional<bool> opt_mac_override;
    cmd_identify->add_option("--trace", opt_trace_in)->required();
    cmd_identify->add_option("--devices", opt_devices_in)->required();
    cmd_identify->add_option("--config", opt_config, "engine config JSON");
    cmd_identify->add_option("--out", opt_attrib_out);
    cmd_identify->add_option("--metrics", opt_metrics_out, "metrics JSON output (needs --truth)");
    cmd_identify->add_option("--truth", opt_truth_in, "ground truth for scoring");
    cmd_identify->add_option("--epsilon", opt_eps_override, "override the erasure estimate");
    cmd_identify->add_option("--mac-filter", opt_mac_override, "override MAC checking in the HMM");

    // reproduce
    auto* cmd_reproduce = app.add_subcommand("reproduce", "Run a named built-in check");
    std::string opt_target;
    cmd_reproduce
        ->add_option("name", opt_target,
                     "one of: sigfox, bound-8-2, construction-sweep, nonce-recovery, retroactive")
        ->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (cmd_construct->parsed()) {
            ProperSet set = construct(opt_p, opt_l);
            json j = set;
            if (opt_out.empty()) {
                std::cout << dump_stable(j);
            } else {
                write_text(opt_out, dump_stable(j));
            }
            return kExitOk;
        }

        if (cmd_verify->parsed()) {
            ProperSet set = read_json_file(opt_set_path).get<ProperSet>();
            const std::uint64_t l = opt_l_override.value_or(set.l);
            std::vector<Permutation> members = set.members;
            if (members.empty() && set.params.has_value()) {
                if (set.size() > 1'000'000) {
                    throw DomainError("set too large to re-verify by enumeration");
                }
                for (std::size_t i = 0; i < set.size(); ++i) {
                    members.push_back(Permutation::increment(set.q, set.increment_at(i)));
                }
            }
            const auto result = verify_proper(members, set.q, l);
            json report{{"q", set.q}, {"l", l}, {"m", members.size()},
                        {"classification", result.proper ? "proper" : "improper"}};
            if (result.proper) {
                ProperSet verified = set;
                verified.l = l;
                verified.classification = Classification::proper;
                report["class"] = to_string(classify(verified));
                if (opt_certificate) {
                    report["certificate"] = follower_certificate(verified);
                }
            } else {
                report["witness"] = *result.witness;
            }
            std::cout << dump_stable(report);
            return result.proper ? kExitOk : kExitCheckFailed;
        }

        if (cmd_search->parsed()) {
            SearchOptions opts;
            opts.override_guard = opt_override_guard;
            opts.size_limit = opt_limit;
            const SearchResult result = exhaustive_max_search(opt_q, opt_search_l, opts);
            json j{{"max_m", result.max_m}, {"set", result.set},
                   {"certificate", follower_certificate(result.set)}};
            if (opt_search_out.empty()) {
                std::cout << dump_stable(j);
            } else {
                write_text(opt_search_out, dump_stable(j));
            }
            return kExitOk;
        }

        if (cmd_bound->parsed()) {
            std::cout << upper_bound(opt_bq, opt_bl) << "\n";
            return kExitOk;
        }

        if (cmd_plan->parsed()) {
            const PlanReport report = plan_parameters(opt_cn_bits, opt_plan_l, opt_sn_bits, opt_id_bits);
            if (opt_plan_json) {
                json j = report;
                std::cout << dump_stable(j);
            } else {
                std::cout << plan_table(report);
            }
            return kExitOk;
        }

        if (cmd_simulate->parsed()) {
            json sj = resolve_scenario(opt_scenario);
            if (opt_seed.has_value()) {
                sj["seed"] = *opt_seed;
            }
            const auto config = ScenarioConfig::from_json(sj);
            const ScenarioResult result = run_scenario(config);
            std::ostringstream trace_os, truth_os;
            for (const auto& packet : result.trace) {
                trace_os << trace_line(packet).dump() << "\n";
            }
            for (const auto& rec : result.truth) {
                truth_os << truth_line(rec).dump() << "\n";
            }
            write_text(opt_trace_out, trace_os.str());
            write_text(opt_truth_out, truth_os.str());
            write_text(opt_devices_out, dump_stable(devices_json(result.devices, config.t_bits)));
            std::cout << "wrote " << result.trace.size() << " delivered / " << result.truth.size()
                      << " transmitted packets\n";
            return kExitOk;
        }

        if (cmd_identify->parsed()) {
            const auto trace = read_trace(opt_trace_in);
            const json dj = read_json_file(opt_devices_in);
            const auto devices = devices_json_parse(dj);
            EngineConfig config;
            if (!opt_config.empty()) {
                config = EngineConfig::from_json(read_json_file(opt_config));
            } else if (dj.contains("t_bits")) {
                config.t_bits = dj.at("t_bits").get<unsigned>();
            }
            if (opt_eps_override.has_value()) {
                config.epsilon = *opt_eps_override;
            }
            if (opt_mac_override.has_value()) {
                config.mac_filter = *opt_mac_override;
            }
            std::vector<TruthRecord> truth;
            const bool have_truth = !opt_truth_in.empty();
            if (have_truth) {
                truth = read_truth(opt_truth_in);
            }
            const IdentifyRun run =
                run_identify(trace, devices, config, have_truth ? &truth : nullptr);
            std::ostringstream os;
            for (const auto& attr : run.attributions) {
                os << attribution_line(attr).dump() << "\n";
            }
            write_text(opt_attrib_out, os.str());
            if (!opt_metrics_out.empty()) {
                if (!run.have_metrics) {
                    throw ValidationError("--metrics requires --truth");
                }
                write_text(opt_metrics_out, dump_stable(metrics_json(run.metrics)));
            }
            if (run.have_metrics) {
                std::cout << "accuracy " << run.metrics.accuracy << ", misidentification rate "
                          << run.metrics.misidentification_rate << ", drop rate "
                          << run.metrics.drop_rate << "\n";
            } else {
                std::cout << "attributed " << run.attributions.size() << " packets\n";
            }
            return kExitOk;
        }

        if (cmd_reproduce->parsed()) {
            if (opt_target == "sigfox") return reproduce_sigfox();
            if (opt_target == "bound-8-2") return reproduce_bound_8_2();
            if (opt_target == "construction-sweep") return reproduce_construction_sweep();
            if (opt_target == "nonce-recovery") return reproduce_nonce_recovery();
            if (opt_target == "retroactive") return reproduce_retroactive();
            std::cerr << "unknown reproduce target: " << opt_target << "\n";
            return kExitUsage;
        }
    } catch (const DomainError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const ValidationError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const NotFoundError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitCheckFailed;
    }
    return kExitUsage;
}

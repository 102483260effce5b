#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "percvae/percvae.h"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitRuntime = 1;
constexpr int kExitUsage = 2;

struct ModelHandle {
    pcv_model* model = nullptr;
    ~ModelHandle() { pcv_model_free(model); }
};

struct OwnedString {
    char* s = nullptr;
    ~OwnedString() { pcv_string_free(s); }
};

int report_failure(pcv_status status) {
    std::cerr << "error (" << pcv_status_name(status) << "): " << pcv_last_error() << "\n";
    return kExitRuntime;
}

bool resolve_checkpoint(std::string& ckpt) {
    if (!ckpt.empty()) return true;
    if (const char* env = std::getenv("PERSONA_CVAE_CKPT"); env && *env) {
        ckpt = env;
        return true;
    }
    std::cerr << "error: --ckpt is required (or set PERSONA_CVAE_CKPT)\n";
    return false;
}

std::vector<std::string> read_personas(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot read personas file " + path);
    std::vector<std::string> out;
    std::string line;
    const std::string prefix = "your persona:";
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.rfind(prefix, 0) == 0) line = line.substr(prefix.size());
        const auto first = line.find_first_not_of(" \t");
        if (first == std::string::npos) continue;
        out.push_back(line.substr(first));
    }
    return out;
}

void print_progress(size_t step, double total, double recon, double kl, double anneal, void*) {
    if (step % 100 == 0)
        std::fprintf(stderr, "step %zu  loss %.4f  recon/token %.4f  kl %.4f  w %.3f\n", step, total, recon, kl, anneal);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Persona CVAE: train, generate, evaluate and serve"};
    app.require_subcommand(1);

    std::string config, data, out_dir, format;
    bool quiet = false;
    auto* train = app.add_subcommand("train", "Train a model and write checkpoints");
    train->add_option("--config", config, "Training config JSON")->required();
    train->add_option("--data", data, "Training corpus")->required();
    train->add_option("--out", out_dir, "Output directory")->required();
    train->add_option("--format", format, "Corpus format: jsonl or convai2 (default from config)");
    train->add_flag("--quiet", quiet, "Suppress progress output");

    std::string ckpt, personas_file;
    std::vector<std::string> inputs;
    int n = 1;
    std::int64_t seed = -1;
    bool no_sds = false, no_fds = false, as_json = false;
    int max_len = 20;
    auto* gen = app.add_subcommand("generate", "Generate N responses for a context");
    gen->add_option("--ckpt", ckpt, "Checkpoint path");
    gen->add_option("--input", inputs, "Context utterance (repeat for multi-turn context)")->required();
    gen->add_option("--personas", personas_file, "File with one persona sentence per line");
    gen->add_option("--n", n, "Number of responses")->check(CLI::Range(1, 100));
    gen->add_option("--seed", seed, "Random seed (default: fresh, printed)")->check(CLI::NonNegativeNumber);
    gen->add_option("--max-len", max_len, "Maximum response length")->check(CLI::Range(1, 200));
    gen->add_flag("--no-sds", no_sds, "Disable the soft decoding strategy");
    gen->add_flag("--no-fds", no_fds, "Disable the force decoding strategy");
    gen->add_flag("--json", as_json, "Print the full response JSON");

    std::vector<int> eval_ns;
    std::string report;
    std::uint64_t eval_seed = 1;
    auto* eval = app.add_subcommand("eval", "Report Distinct-1/2 and Persona Coverage");
    eval->add_option("--ckpt", ckpt, "Checkpoint path");
    eval->add_option("--data", data, "Evaluation corpus")->required();
    eval->add_option("--format", format, "Corpus format: jsonl or convai2")->default_val("jsonl");
    eval->add_option("--n", eval_ns, "Responses per turn (1, 5 or 10; repeatable)")
        ->check(CLI::IsMember({1, 5, 10}));
    eval->add_option("--report", report, "Write the JSON report here");
    eval->add_option("--seed", eval_seed, "Random seed");
    eval->add_flag("--no-sds", no_sds, "Disable the soft decoding strategy");
    eval->add_flag("--no-fds", no_fds, "Disable the force decoding strategy");

    std::string host = "127.0.0.1";
    int port = 8080;
    auto* serve = app.add_subcommand("serve", "Serve the HTTP JSON API");
    serve->add_option("--ckpt", ckpt, "Checkpoint path");
    serve->add_option("--port", port, "Port")->check(CLI::Range(0, 65535));
    serve->add_option("--host", host, "Bind address");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        std::cerr << app.help();
        return kExitUsage;
    }

    try {
        if (train->parsed()) {
            const pcv_status s = pcv_train(config.c_str(), data.c_str(), format.empty() ? nullptr : format.c_str(),
                                           out_dir.c_str(), quiet ? nullptr : print_progress, nullptr);
            if (s != PCV_OK) return report_failure(s);
            std::cout << "wrote " << out_dir << "\n";
            return kExitOk;
        }

        if (!resolve_checkpoint(ckpt)) return kExitUsage;
        ModelHandle model;
        if (auto s = pcv_model_load(ckpt.c_str(), &model.model); s != PCV_OK) return report_failure(s);

        if (gen->parsed()) {
            nlohmann::json request{{"context", inputs}, {"n", n}, {"sds", !no_sds}, {"fds", !no_fds}, {"max_len", max_len}};
            request["personas"] = personas_file.empty() ? std::vector<std::string>{} : read_personas(personas_file);
            if (seed >= 0) request["seed"] = seed;
            OwnedString out;
            if (auto s = pcv_generate_json(model.model, request.dump().c_str(), &out.s); s != PCV_OK)
                return report_failure(s);
            const auto body = nlohmann::json::parse(out.s);
            if (as_json) {
                std::cout << body.dump(2) << "\n";
                return kExitOk;
            }
            std::cout << "seed " << body.at("seed").get<std::uint64_t>() << "\n";
            std::size_t i = 0;
            for (const auto& r : body.at("responses")) {
                const auto& p = r.at("selected_persona");
                std::cout << "[" << i++ << "] (" << (p.is_null() ? std::string("none") : "persona " + std::to_string(p.get<int>()))
                          << (r.at("fds_used").get<bool>() ? ", fds" : "") << ") " << r.at("text").get<std::string>() << "\n";
            }
            return kExitOk;
        }

        if (eval->parsed()) {
            if (eval_ns.empty()) eval_ns = {1, 5, 10};
            OwnedString json_report, table;
            if (auto s = pcv_evaluate(model.model, data.c_str(), format.c_str(), eval_ns.data(), eval_ns.size(), eval_seed,
                                      !no_sds, !no_fds, &json_report.s, &table.s);
                s != PCV_OK)
                return report_failure(s);
            std::cout << table.s;
            if (!report.empty()) {
                std::ofstream f(report);
                if (!f) {
                    std::cerr << "error: cannot write " << report << "\n";
                    return kExitRuntime;
                }
                f << json_report.s << "\n";
            }
            return kExitOk;
        }

        if (serve->parsed()) {
            std::cerr << "serving on http://" << host << ":" << port << "\n";
            if (auto s = pcv_serve(model.model, host.c_str(), port); s != PCV_OK) return report_failure(s);
            return kExitOk;
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitRuntime;
    }
    return kExitUsage;
}

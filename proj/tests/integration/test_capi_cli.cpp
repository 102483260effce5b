#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <sys/wait.h>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>

#include <json.hpp>

#include "percvae/percvae.h"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Run {
    int code = -1;
    std::string out;
};

Run run(const std::string& args) {
    const std::string cmd = std::string("env -u PERSONA_CVAE_CKPT ") + PERCVAE_CLI + " " + args + " 2>/dev/null";
    Run r;
    FILE* p = popen(cmd.c_str(), "r");
    REQUIRE(p);
    char buf[4096];
    while (std::size_t n = std::fread(buf, 1, sizeof buf, p)) r.out.append(buf, n);
    const int status = pclose(p);
    r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    return r;
}

std::string take(char* s) {
    std::string out = s ? s : "";
    pcv_string_free(s);
    return out;
}

/// Trains a tiny model once per process through the C API.
const fs::path& workdir() {
    static const fs::path dir = [] {
        auto d = fs::temp_directory_path() / "percvae_capi_cli";
        fs::remove_all(d);
        fs::create_directories(d);
        json cfg = json::parse(std::ifstream(std::string(PERCVAE_TEST_DATA) + "/toy_config.json"));
        cfg["model"]["embed_dim"] = 4;
        cfg["model"]["hidden_dim"] = 6;
        cfg["model"]["latent_dim"] = 3;
        cfg["max_steps"] = 4;
        std::ofstream(d / "config.json") << cfg.dump();
        const auto data = std::string(PERCVAE_TEST_DATA) + "/toy_corpus.jsonl";
        if (pcv_train((d / "config.json").c_str(), data.c_str(), nullptr, (d / "out").c_str(), nullptr, nullptr) != PCV_OK)
            FAIL(pcv_last_error());
        std::ofstream(d / "personas.txt") << "your persona: i am a soccer player\nyour persona: i like to cook\n";
        return d;
    }();
    return dir;
}

std::string ckpt() { return (workdir() / "out" / "model.bin").string(); }
std::string data() { return std::string(PERCVAE_TEST_DATA) + "/toy_corpus.jsonl"; }

}  // namespace

TEST_CASE("C API: model lifecycle, info and generate") {
    pcv_model* m = nullptr;
    REQUIRE(pcv_model_load(ckpt().c_str(), &m) == PCV_OK);
    char* s = nullptr;
    REQUIRE(pcv_model_info_json(m, &s) == PCV_OK);
    const auto info = json::parse(take(s));
    CHECK(info.at("format_version") == 1);
    CHECK(info.at("config").at("hidden_dim") == 6);

    const json req{{"context", {"what do you do for a living ?"}}, {"personas", {"i am a soccer player"}}, {"n", 3}, {"seed", 9}};
    REQUIRE(pcv_generate_json(m, req.dump().c_str(), &s) == PCV_OK);
    const auto a = take(s);
    REQUIRE(pcv_generate_json(m, req.dump().c_str(), &s) == PCV_OK);
    CHECK(take(s) == a);
    CHECK(json::parse(a).at("responses").size() == 3);

    CHECK(pcv_generate_json(m, "{\"context\": []}", &s) == PCV_ERR_INVALID_REQUEST);
    CHECK(std::string(pcv_last_error()).find("context") != std::string::npos);
    CHECK(pcv_generate_json(m, "nope", &s) == PCV_ERR_INVALID_REQUEST);
    CHECK(pcv_generate_json(nullptr, "{}", &s) == PCV_ERR_INVALID_ARGUMENT);
    CHECK(std::string(pcv_status_name(PCV_ERR_LOAD)) == "load");
    CHECK(std::string(pcv_version()) == "0.1.0");

    char* report = nullptr;
    char* table = nullptr;
    const int ns[] = {1, 5};
    REQUIRE(pcv_evaluate(m, data().c_str(), "jsonl", ns, 2, 3, 1, 1, &report, &table) == PCV_OK);
    CHECK(json::parse(take(report)).at("reports").size() == 2);
    CHECK(take(table).find("P. Cover") != std::string::npos);

    pcv_server* srv = nullptr;
    REQUIRE(pcv_server_start(m, "127.0.0.1", 0, &srv) == PCV_OK);
    CHECK(pcv_server_port(srv) > 0);
    pcv_server_stop(srv);
    pcv_model_free(m);
}

TEST_CASE("C API: load and train failures map to status codes") {
    pcv_model* m = nullptr;
    CHECK(pcv_model_load((workdir() / "missing.bin").c_str(), &m) == PCV_ERR_LOAD);
    CHECK(m == nullptr);
    std::ofstream(workdir() / "junk.bin") << "junk";
    CHECK(pcv_model_load((workdir() / "junk.bin").c_str(), &m) == PCV_ERR_LOAD);
    std::ofstream(workdir() / "bad.json") << "{\"batch_size\": 0}";
    CHECK(pcv_train((workdir() / "bad.json").c_str(), data().c_str(), nullptr, (workdir() / "x").c_str(), nullptr,
                    nullptr) == PCV_ERR_CONFIG);
    CHECK(pcv_train(nullptr, nullptr, nullptr, nullptr, nullptr, nullptr) == PCV_ERR_INVALID_ARGUMENT);
}

TEST_CASE("CLI: usage errors exit 2, runtime errors exit 1") {
    CHECK(run("").code == 2);
    CHECK(run("bogus").code == 2);
    CHECK(run("generate --input hi").code == 2);
    CHECK(run("generate --ckpt " + ckpt()).code == 2);
    CHECK(run("generate --ckpt " + ckpt() + " --input hi --n 0").code == 2);
    CHECK(run("eval --ckpt " + ckpt() + " --data " + data() + " --n 3").code == 2);
    CHECK(run("generate --ckpt /nonexistent/model.bin --input hi").code == 1);
    CHECK(run("train --config " + (workdir() / "bad.json").string() + " --data " + data() + " --out " +
              (workdir() / "y").string()).code == 1);
    CHECK(run("--help").code == 0);
}

TEST_CASE("CLI: generate is deterministic for a given seed") {
    const auto args = "generate --ckpt " + ckpt() + " --input 'what do you do for a living ?' --personas " +
                      (workdir() / "personas.txt").string() + " --n 3 --seed 11 --max-len 8";
    const auto a = run(args), b = run(args);
    CHECK(a.code == 0);
    CHECK(a.out == b.out);
    CHECK(a.out.rfind("seed 11\n", 0) == 0);
    CHECK(a.out.find("[2] (") != std::string::npos);
    const auto j = run(args + " --json --no-sds --no-fds");
    CHECK(j.code == 0);
    CHECK(json::parse(j.out).at("responses").size() == 3);
    const std::string via_env = std::string("PERSONA_CVAE_CKPT=") + ckpt() + " " + PERCVAE_CLI +
                                " generate --input hi --seed 1 > /dev/null 2>&1";
    CHECK(std::system(via_env.c_str()) == 0);
}

TEST_CASE("CLI: eval prints one row per N with three metric columns and writes the report") {
    const auto report = (workdir() / "report.json").string();
    const auto r = run("eval --ckpt " + ckpt() + " --data " + data() + " --n 5 --report " + report);
    REQUIRE(r.code == 0);
    CHECK(r.out.find("Dtinct-1") != std::string::npos);
    CHECK(r.out.find("Dtinct-2") != std::string::npos);
    CHECK(r.out.find("P. Cover") != std::string::npos);
    std::size_t lines = 0;
    for (char ch : r.out) lines += ch == '\n';
    CHECK(lines == 2);
    const auto j = json::parse(std::ifstream(report));
    REQUIRE(j.at("reports").size() == 1);
    CHECK(j.at("reports")[0].at("n") == 5);
}

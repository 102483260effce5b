#include "percvae/percvae.h"

#include <cstdlib>
#include <cstring>
#include <memory>
#include <new>
#include <string>

#include "percvae/error.hpp"
#include "percvae/service.hpp"
#include "percvae/trainer.hpp"

struct pcv_model {
    std::shared_ptr<const percvae::Model> model;
};

struct pcv_server {
    std::shared_ptr<const percvae::InferenceService> service;
    std::unique_ptr<percvae::HttpServer> http;
};

namespace {

thread_local std::string g_last_error;

pcv_status status_of(percvae::ErrorKind kind) {
    using percvae::ErrorKind;
    switch (kind) {
        case ErrorKind::io: return PCV_ERR_IO;
        case ErrorKind::parse: return PCV_ERR_PARSE;
        case ErrorKind::config: return PCV_ERR_CONFIG;
        case ErrorKind::load: return PCV_ERR_LOAD;
        case ErrorKind::divergence: return PCV_ERR_DIVERGENCE;
        case ErrorKind::invalid_request: return PCV_ERR_INVALID_REQUEST;
        case ErrorKind::undefined_metric: return PCV_ERR_UNDEFINED_METRIC;
        case ErrorKind::shape:
        case ErrorKind::invalid_support:
        case ErrorKind::contract:
        case ErrorKind::domain: return PCV_ERR_INTERNAL;
    }
    return PCV_ERR_INTERNAL;
}

template <class F>
pcv_status guarded(F&& f) {
    try {
        g_last_error.clear();
        f();
        return PCV_OK;
    } catch (const percvae::Error& e) {
        g_last_error = e.what();
        return status_of(e.kind());
    } catch (const std::bad_alloc&) {
        g_last_error = "out of memory";
        return PCV_ERR_INTERNAL;
    } catch (const std::exception& e) {
        g_last_error = e.what();
        return PCV_ERR_INTERNAL;
    }
}

pcv_status invalid(const char* what) {
    g_last_error = what;
    return PCV_ERR_INVALID_ARGUMENT;
}

char* dup_string(const std::string& s) {
    auto* out = static_cast<char*>(std::malloc(s.size() + 1));
    if (!out) throw std::bad_alloc();
    std::memcpy(out, s.c_str(), s.size() + 1);
    return out;
}

percvae::CorpusFormat format_or(const char* name, const std::string& fallback) {
    return percvae::parse_corpus_format(name ? std::string(name) : fallback);
}

}  // namespace

extern "C" {

const char* pcv_version(void) { return "0.1.0"; }

const char* pcv_last_error(void) { return g_last_error.c_str(); }

const char* pcv_status_name(pcv_status status) {
    switch (status) {
        case PCV_OK: return "ok";
        case PCV_ERR_INVALID_ARGUMENT: return "invalid_argument";
        case PCV_ERR_IO: return "io";
        case PCV_ERR_PARSE: return "parse";
        case PCV_ERR_CONFIG: return "config";
        case PCV_ERR_LOAD: return "load";
        case PCV_ERR_DIVERGENCE: return "divergence";
        case PCV_ERR_INVALID_REQUEST: return "invalid_request";
        case PCV_ERR_UNDEFINED_METRIC: return "undefined_metric";
        case PCV_ERR_INTERNAL: return "internal";
    }
    return "unknown";
}

void pcv_string_free(char* s) { std::free(s); }

pcv_status pcv_train(const char* config_path, const char* data_path, const char* data_format, const char* out_dir,
                     pcv_progress_fn progress, void* user) {
    if (!config_path || !data_path || !out_dir) return invalid("pcv_train: config, data and out paths are required");
    return guarded([&] {
        const auto config = percvae::load_train_config(config_path);
        const auto dialogues = percvae::load_dialogues(data_path, format_or(data_format, config.data_format));
        percvae::ProgressFn fn;
        if (progress)
            fn = [&](const percvae::LossRecord& r) {
                progress(r.step, r.loss.total, r.loss.recon_per_token(), r.loss.kl, r.loss.anneal_weight, user);
            };
        percvae::train(config, dialogues, out_dir, fn);
    });
}

pcv_status pcv_model_load(const char* checkpoint_path, pcv_model** out) {
    if (!checkpoint_path || !out) return invalid("pcv_model_load: null argument");
    *out = nullptr;
    return guarded([&] {
        auto m = std::make_shared<const percvae::Model>(percvae::load_checkpoint(checkpoint_path));
        *out = new pcv_model{std::move(m)};
    });
}

void pcv_model_free(pcv_model* model) { delete model; }

pcv_status pcv_model_info_json(const pcv_model* model, char** out_json) {
    if (!model || !out_json) return invalid("pcv_model_info_json: null argument");
    return guarded([&] { *out_json = dup_string(percvae::model_info(*model->model).dump()); });
}

pcv_status pcv_generate_json(const pcv_model* model, const char* request_json, char** out_json) {
    if (!model || !request_json || !out_json) return invalid("pcv_generate_json: null argument");
    *out_json = nullptr;
    return guarded([&] {
        nlohmann::json body;
        try {
            body = nlohmann::json::parse(request_json);
        } catch (const nlohmann::json::exception& e) {
            percvae::fail(percvae::ErrorKind::invalid_request, std::string("malformed JSON: ") + e.what());
        }
        const auto request = percvae::parse_generate_request(body, model->model->config);
        *out_json = dup_string(percvae::serve_generate(*model->model, request).dump());
    });
}

pcv_status pcv_evaluate(const pcv_model* model, const char* data_path, const char* data_format, const int* ns,
                        size_t ns_count, uint64_t seed, int sds, int fds, char** out_report_json, char** out_table) {
    if (!model || !data_path || (!ns && ns_count)) return invalid("pcv_evaluate: null argument");
    return guarded([&] {
        percvae::EvalOptions options;
        if (ns_count) options.ns.assign(ns, ns + ns_count);
        options.seed = seed;
        options.sds = sds != 0;
        options.fds = fds != 0;
        const auto turns = percvae::load_corpus(data_path, format_or(data_format, "jsonl"));
        const auto reports = percvae::evaluate_model(*model->model, turns, options);
        if (out_report_json) *out_report_json = dup_string(percvae::report_to_json(reports).dump(2));
        if (out_table) *out_table = dup_string(percvae::report_to_table(reports));
    });
}

pcv_status pcv_server_start(const pcv_model* model, const char* host, int port, pcv_server** out) {
    if (!model || !out) return invalid("pcv_server_start: null argument");
    *out = nullptr;
    return guarded([&] {
        auto server = std::make_unique<pcv_server>();
        server->service = std::make_shared<const percvae::InferenceService>(model->model);
        server->http = std::make_unique<percvae::HttpServer>(server->service);
        server->http->start(host ? host : "127.0.0.1", port);
        *out = server.release();
    });
}

int pcv_server_port(const pcv_server* server) { return server ? server->http->port() : -1; }

void pcv_server_stop(pcv_server* server) {
    if (!server) return;
    server->http->stop();
    delete server;
}

pcv_status pcv_serve(const pcv_model* model, const char* host, int port) {
    if (!model) return invalid("pcv_serve: null model");
    return guarded([&] {
        auto service = std::make_shared<const percvae::InferenceService>(model->model);
        percvae::HttpServer http(service);
        http.listen_blocking(host ? host : "127.0.0.1", port);
    });
}

}  // extern "C"

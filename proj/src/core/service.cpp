#include "percvae/service.hpp"

#include <cmath>
#include <random>
#include <thread>

#include <httplib.h>

#include "percvae/error.hpp"
#include "percvae/schema.hpp"
#include "percvae/trainer.hpp"

namespace percvae {

namespace {

std::vector<TokenIds> encode_all(const Vocabulary& vocab, const std::vector<std::string>& texts, const char* field) {
    std::vector<TokenIds> out;
    for (std::size_t i = 0; i < texts.size(); ++i) {
        auto ids = vocab.encode(texts[i]);
        if (ids.empty())
            fail(ErrorKind::invalid_request, std::string(field) + "[" + std::to_string(i) + "] has no tokens");
        out.push_back(std::move(ids));
    }
    return out;
}

nlohmann::json error_body(const std::string& message) { return {{"error", message}}; }

}  // namespace

GenerateRequest parse_generate_request(const nlohmann::json& body, const ModelConfig& config) {
    auto errors = validate_schema(generate_request_schema(), body);
    if (!errors.empty()) {
        std::string msg = "invalid request";
        for (const auto& e : errors) msg += "; " + e;
        fail(ErrorKind::invalid_request, msg);
    }
    GenerateRequest r;
    r.context = body.at("context").get<std::vector<std::string>>();
    if (body.contains("personas")) r.personas = body.at("personas").get<std::vector<std::string>>();
    if (static_cast<std::int64_t>(r.personas.size()) > config.max_personas)
        fail(ErrorKind::invalid_request, "too many personas: " + std::to_string(r.personas.size()) + " > " +
                                             std::to_string(config.max_personas));
    r.n = body.value("n", 1);
    if (body.contains("seed")) r.seed = body.at("seed").get<std::uint64_t>();
    r.sds = body.value("sds", true);
    r.fds = body.value("fds", true);
    r.max_len = body.value("max_len", std::size_t{20});
    r.latent = body.value("latent", std::string("sample")) == "mean" ? LatentMode::prior_mean : LatentMode::prior_sample;
    return r;
}

std::uint64_t random_seed() {
    std::random_device rd;
    const std::uint64_t hi = rd(), lo = rd();
    return ((hi << 32) | lo) & ((std::uint64_t{1} << 53) - 1);
}

nlohmann::json serve_generate(const Model& model, const GenerateRequest& request) {
    const auto context = encode_all(model.vocab, request.context, "context");
    const auto personas = encode_all(model.vocab, request.personas, "personas");
    GenerateOptions options;
    options.n = request.n;
    options.seed = request.seed ? *request.seed : random_seed();
    options.max_len = request.max_len;
    options.sds = request.sds;
    options.fds = request.fds;
    options.latent = request.latent;
    const auto result = generate_n(model, context, personas, options);

    nlohmann::json responses = nlohmann::json::array(), traces = nlohmann::json::array(),
                   norms = nlohmann::json::array();
    for (const auto& r : result.responses) {
        nlohmann::json item{{"tokens", model.vocab.words(r.tokens)},
                            {"text", model.vocab.decode(r.tokens)},
                            {"selected_persona", nullptr},
                            {"fds_used", r.fds_used}};
        if (r.selected_persona) item["selected_persona"] = *r.selected_persona;
        responses.push_back(std::move(item));
        traces.push_back(r.type_trace);
        double sq = 0.0;
        for (double v : r.z) sq += v * v;
        norms.push_back(std::sqrt(sq));
    }
    return {{"seed", result.seed},
            {"responses", responses},
            {"attention", result.attention},
            {"type_trace", traces},
            {"z_norms", norms}};
}

nlohmann::json model_info(const Model& model) {
    return {{"config", model.config},
            {"vocab_size", model.vocab.size()},
            {"vocab_hash", model.vocab.hash_hex()},
            {"parameter_count", model.params.parameter_count()},
            {"format_version", kCheckpointVersion}};
}

InferenceService::InferenceService(std::shared_ptr<const Model> model) : model_(std::move(model)) {
    if (!model_) fail(ErrorKind::load, "inference service needs a loaded model");
}

HttpReply InferenceService::handle(const std::string& method, const std::string& path, const std::string& body) const {
    if (path == "/api/health" && method == "GET") return {200, nlohmann::json{{"status", "ok"}}.dump()};
    if (path == "/api/model" && method == "GET") return {200, model_info(*model_).dump()};
    if (path == "/api/generate" && method == "POST") {
        nlohmann::json request;
        try {
            request = nlohmann::json::parse(body);
        } catch (const nlohmann::json::exception& e) {
            return {400, error_body(std::string("malformed JSON: ") + e.what()).dump()};
        }
        try {
            return {200, serve_generate(*model_, parse_generate_request(request, model_->config)).dump()};
        } catch (const Error& e) {
            if (e.kind() == ErrorKind::invalid_request) return {400, error_body(e.what()).dump()};
            return {500, error_body(e.what()).dump()};
        }
    }
    if (path == "/api/generate" || path == "/api/health" || path == "/api/model")
        return {405, error_body("method not allowed").dump()};
    return {404, error_body("not found: " + path).dump()};
}

struct HttpServer::Impl {
    std::shared_ptr<const InferenceService> service;
    httplib::Server server;
    std::thread thread;
};

HttpServer::HttpServer(std::shared_ptr<const InferenceService> service) : impl_(std::make_unique<Impl>()) {
    impl_->service = std::move(service);
    auto route = [svc = impl_->service](const httplib::Request& req, httplib::Response& res) {
        const auto reply = svc->handle(req.method, req.path, req.body);
        res.status = reply.status;
        res.set_content(reply.body, "application/json");
    };
    auto& s = impl_->server;
    s.set_default_headers({{"Access-Control-Allow-Origin", "*"},
                           {"Access-Control-Allow-Headers", "Content-Type"},
                           {"Access-Control-Allow-Methods", "GET, POST, OPTIONS"}});
    s.Get("/api/health", route);
    s.Get("/api/model", route);
    s.Post("/api/generate", route);
    s.Options(".*", [](const httplib::Request&, httplib::Response& res) { res.status = 204; });
}

HttpServer::~HttpServer() { stop(); }

int HttpServer::start(const std::string& host, int port) {
    auto& s = impl_->server;
    if (port == 0) {
        port_ = s.bind_to_any_port(host);
    } else {
        port_ = s.bind_to_port(host, port) ? port : -1;
    }
    if (port_ < 0) fail(ErrorKind::io, "cannot bind " + host + ":" + std::to_string(port));
    impl_->thread = std::thread([this] { impl_->server.listen_after_bind(); });
    s.wait_until_ready();
    return port_;
}

void HttpServer::listen_blocking(const std::string& host, int port) {
    auto& s = impl_->server;
    if (!s.bind_to_port(host, port)) fail(ErrorKind::io, "cannot bind " + host + ":" + std::to_string(port));
    port_ = port;
    s.listen_after_bind();
}

void HttpServer::stop() {
    if (!impl_) return;
    impl_->server.stop();
    if (impl_->thread.joinable()) impl_->thread.join();
}

std::vector<MetricReport> evaluate_model(const Model& model, const std::vector<RawExample>& turns,
                                         const EvalOptions& options) {
    if (turns.empty()) fail(ErrorKind::undefined_metric, "evaluation set has no turns");
    int max_n = 0;
    for (int n : options.ns) {
        if (n < 1) fail(ErrorKind::config, "evaluation N must be positive");
        max_n = std::max(max_n, n);
    }
    const auto examples = index_examples(turns, model.vocab, 0.0, static_cast<std::size_t>(model.config.max_personas));
    // Responses for smaller N are the first N draws of the same per-turn stream.
    std::vector<std::vector<TokenIds>> generated;
    std::vector<std::vector<TokenIds>> personas;
    const SeededSampler root(options.seed);
    for (std::size_t t = 0; t < examples.size(); ++t) {
        GenerateOptions g;
        g.n = max_n;
        g.seed = root.split(t).next_u64();
        g.sds = options.sds;
        g.fds = options.fds;
        g.max_len = options.max_len;
        auto result = generate_n(model, examples[t].context, examples[t].personas, g);
        std::vector<TokenIds> rs;
        for (auto& r : result.responses) rs.push_back(std::move(r.tokens));
        generated.push_back(std::move(rs));
        personas.push_back(examples[t].personas);
    }
    std::vector<MetricReport> reports;
    for (int n : options.ns) {
        std::vector<std::vector<TokenIds>> subset;
        for (const auto& rs : generated) subset.emplace_back(rs.begin(), rs.begin() + n);
        reports.push_back(evaluate_turns(subset, personas, model.vocab.idf(), n, options.per_turn_distinct,
                                         options.keep_details));
    }
    return reports;
}

}  // namespace percvae

#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "percvae/corpus.hpp"
#include "percvae/decoder.hpp"
#include "percvae/metrics.hpp"
#include "percvae/model.hpp"

namespace percvae {

struct GenerateRequest {
    std::vector<std::string> context;
    std::vector<std::string> personas;
    int n = 1;
    std::optional<std::uint64_t> seed;
    bool sds = true;
    bool fds = true;
    std::size_t max_len = 20;
    LatentMode latent = LatentMode::prior_sample;
};

/// Validates against the request schema and the model's persona limit; throws
/// ErrorKind::invalid_request with every violation listed.
GenerateRequest parse_generate_request(const nlohmann::json& body, const ModelConfig& config);

/// A fresh seed that survives a JSON round trip through doubles (53 bits).
std::uint64_t random_seed();

/// Tokenizes with the model vocabulary, runs generate_n and renders the
/// response body. The seed is taken from the request or drawn fresh.
nlohmann::json serve_generate(const Model& model, const GenerateRequest& request);

nlohmann::json model_info(const Model& model);

struct HttpReply {
    int status = 200;
    std::string body;
};

/// Request routing without sockets: the same code path the HTTP server runs.
class InferenceService {
public:
    explicit InferenceService(std::shared_ptr<const Model> model);

    HttpReply handle(const std::string& method, const std::string& path, const std::string& body) const;
    const Model& model() const noexcept { return *model_; }

private:
    std::shared_ptr<const Model> model_;
};

/// Threaded HTTP front end for InferenceService.
class HttpServer {
public:
    explicit HttpServer(std::shared_ptr<const InferenceService> service);
    ~HttpServer();
    HttpServer(const HttpServer&) = delete;
    HttpServer& operator=(const HttpServer&) = delete;

    /// Binds and starts listening on a background thread; port 0 picks a free
    /// port. Returns the bound port.
    int start(const std::string& host, int port);
    /// Blocks until stop() is called from another thread.
    void listen_blocking(const std::string& host, int port);
    void stop();
    int port() const noexcept { return port_; }

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
    int port_ = 0;
};

struct EvalOptions {
    std::vector<int> ns{1, 5, 10};
    std::uint64_t seed = 1;
    bool sds = true;
    bool fds = true;
    std::size_t max_len = 20;
    bool per_turn_distinct = false;
    bool keep_details = false;
};

/// Generates N responses for every test turn and reports Distinct-1/2 and
/// Persona Coverage per requested N. Turns without personas are skipped for
/// coverage and counted for distinct-k.
std::vector<MetricReport> evaluate_model(const Model& model, const std::vector<RawExample>& turns,
                                         const EvalOptions& options);

}  // namespace percvae

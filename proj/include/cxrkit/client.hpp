#pragma once

#include <atomic>
#include <chrono>
#include <cstddef>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "cxrkit/corpus.hpp"
#include "cxrkit/metrics.hpp"

namespace cxrkit::client {

inline constexpr const char* kTokenEnvVar = "CXRKIT_ENDPOINT_TOKEN";

struct InferenceRequest {
    std::string qa_id;
    std::string image;
    std::string prompt;
    bool operator==(const InferenceRequest&) const = default;
};

struct InferenceResponse {
    std::string qa_id;
    std::string answer;
    bool operator==(const InferenceResponse&) const = default;
};

// Line codecs: request {qa_id, image, prompt}, response {qa_id, answer}.
void write_requests(std::ostream& out, std::span<const InferenceRequest> reqs);
std::vector<InferenceRequest> read_requests(std::istream& in);
void write_responses(std::ostream& out, std::span<const InferenceResponse> resps);
std::vector<InferenceResponse> read_responses(std::istream& in);  // TransportError if malformed

// One round trip for one batch. Implementations throw TransportError; transient() marks
// failures worth retrying. exchange() may be called concurrently from several threads.
class Transport {
public:
    virtual ~Transport() = default;
    virtual std::vector<InferenceResponse> exchange(std::span<const InferenceRequest> batch) = 0;
};

// Writes <dir>/requests-<k>.jsonl, optionally runs a responder command, and waits for
// <dir>/responses-<k>.jsonl. The command sees REQUESTS and RESPONSES in its environment
// and may also use the {requests}/{responses} placeholders.
class FileExchangeTransport : public Transport {
public:
    struct Options {
        std::filesystem::path dir;
        std::string responder_command;
        std::chrono::milliseconds timeout{std::chrono::minutes(10)};
        std::chrono::milliseconds poll_interval{200};
    };
    explicit FileExchangeTransport(Options opts);
    std::vector<InferenceResponse> exchange(std::span<const InferenceRequest> batch) override;

private:
    Options opts_;
    std::atomic<std::size_t> next_{0};
};

// POSTs the request array as JSON to url; expects a JSON array of responses.
class HttpTransport : public Transport {
public:
    struct Options {
        std::string url;  // http://host:port/path
        std::string bearer_token;
        std::chrono::seconds connect_timeout{10};
        std::chrono::seconds read_timeout{600};
    };
    explicit HttpTransport(Options opts);
    std::vector<InferenceResponse> exchange(std::span<const InferenceRequest> batch) override;

private:
    Options opts_;
    std::string scheme_host_port_;
    std::string path_;
};

struct RetryPolicy {
    int attempts = 3;
    std::chrono::milliseconds initial_backoff{1000};
    std::function<void(std::chrono::milliseconds)> sleep;  // defaults to this_thread::sleep_for
};

struct SubmitOptions {
    RetryPolicy retry;
    std::size_t shard_size = 0;  // 0: whole batch in one call
    std::size_t max_concurrency = 4;
    std::string run_id;
};

// Exactly one prediction per request, in request order.
std::vector<metrics::Prediction> submit_batch(std::span<const InferenceRequest> requests,
                                              Transport& transport, const SubmitOptions& opts = {});

// ---------------------------------------------------------------------------
// Local oracles
// ---------------------------------------------------------------------------

enum class OracleKind { echo_gt, constant, lookup, expert_threshold };
OracleKind parse_oracle_kind(std::string_view s);
std::string_view to_string(OracleKind k);

inline constexpr const char* kNotApplicable = "n/a";

struct OracleSpec {
    OracleKind kind = OracleKind::echo_gt;
    std::string constant_text;
    std::map<std::string, std::string> lookup;  // qa_id -> answer
    double threshold = 0.5;
    // Extra phrases mapped to canonical condition keys, e.g. "enlarged heart" -> cardiomegaly.
    std::map<std::string, std::string> synonyms = default_synonyms();
    // Questions that name no condition but mention abnormality are answered
    // "yes" iff any condition reaches the threshold.
    bool generic_abnormality = true;

    static std::map<std::string, std::string> default_synonyms();
};

// Longest condition name or synonym found in the question at word boundaries
// (a trailing plural "s"/"es" is tolerated). Ties resolve to canonical order.
std::optional<std::string> extract_condition(std::string_view question,
                                             const std::map<std::string, std::string>& synonyms);

std::vector<metrics::Prediction> run_oracle(const OracleSpec& spec, std::span<const QARecord> qas,
                                            std::span<const ExpertPrediction> experts = {},
                                            const std::string& run_id = {});

}  // namespace cxrkit::client

#include "cxrkit/client.hpp"

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <future>
#include <istream>
#include <ostream>
#include <set>
#include <thread>
#include <unordered_map>

#include <httplib.h>
#include <json.hpp>

#include "cxrkit/error.hpp"
#include "cxrkit/metrics.hpp"
#include "cxrkit/text.hpp"

namespace cxrkit::client {

using nlohmann::json;

// ---------------------------------------------------------------------------
// Codecs
// ---------------------------------------------------------------------------

namespace {

json to_json(const InferenceRequest& r) {
    return json{{"qa_id", r.qa_id}, {"image", r.image}, {"prompt", r.prompt}};
}

InferenceResponse response_from_json(const json& j) {
    if (!j.is_object()) throw TransportError("malformed response: record is not an object");
    const auto id = j.find("qa_id");
    if (id == j.end() || !id->is_string())
        throw TransportError("malformed response: record without qa_id");
    const auto ans = j.find("answer");
    if (ans == j.end() || !ans->is_string())
        throw TransportError("malformed response: record " + id->get<std::string>() +
                             " without answer");
    return {id->get<std::string>(), ans->get<std::string>()};
}

template <typename Fn>
void for_each_line(std::istream& in, Fn fn) {
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        std::string_view v = line;
        if (lineno == 1 && text::starts_with_bom(v)) v.remove_prefix(3);
        v = text::trim(v);
        if (!v.empty()) fn(v, lineno);
    }
}

std::string shell_quote(const std::string& s) {
    std::string out = "'";
    for (char c : s) {
        if (c == '\'')
            out += "'\\''";
        else
            out.push_back(c);
    }
    out += "'";
    return out;
}

void replace_all(std::string& s, std::string_view from, const std::string& to) {
    for (std::size_t pos = s.find(from); pos != std::string::npos; pos = s.find(from, pos + to.size()))
        s.replace(pos, from.size(), to);
}

}  // namespace

void write_requests(std::ostream& out, std::span<const InferenceRequest> reqs) {
    for (const auto& r : reqs) out << to_json(r).dump() << '\n';
}

std::vector<InferenceRequest> read_requests(std::istream& in) {
    std::vector<InferenceRequest> out;
    for_each_line(in, [&](std::string_view v, std::size_t lineno) {
        try {
            const auto j = json::parse(v);
            out.push_back({j.at("qa_id").get<std::string>(), j.at("image").get<std::string>(),
                           j.at("prompt").get<std::string>()});
        } catch (const json::exception& ex) {
            throw ParseError(std::string("malformed request: ") + ex.what(), lineno);
        }
    });
    return out;
}

void write_responses(std::ostream& out, std::span<const InferenceResponse> resps) {
    for (const auto& r : resps) out << json{{"qa_id", r.qa_id}, {"answer", r.answer}}.dump() << '\n';
}

std::vector<InferenceResponse> read_responses(std::istream& in) {
    std::vector<InferenceResponse> out;
    for_each_line(in, [&](std::string_view v, std::size_t lineno) {
        json j;
        try {
            j = json::parse(v);
        } catch (const json::exception& ex) {
            throw TransportError("malformed response at line " + std::to_string(lineno) + ": " +
                                 ex.what());
        }
        out.push_back(response_from_json(j));
    });
    return out;
}

// ---------------------------------------------------------------------------
// File exchange
// ---------------------------------------------------------------------------

FileExchangeTransport::FileExchangeTransport(Options opts) : opts_(std::move(opts)) {}

std::vector<InferenceResponse> FileExchangeTransport::exchange(
    std::span<const InferenceRequest> batch) {
    namespace fs = std::filesystem;
    std::error_code ec;
    fs::create_directories(opts_.dir, ec);
    const std::size_t k = next_++;
    const fs::path req = opts_.dir / ("requests-" + std::to_string(k) + ".jsonl");
    const fs::path resp = opts_.dir / ("responses-" + std::to_string(k) + ".jsonl");
    fs::remove(resp, ec);
    {
        std::ofstream out(req, std::ios::binary);
        if (!out) throw TransportError("cannot write request file " + req.string());
        write_requests(out, batch);
        if (!out) throw TransportError("failed writing request file " + req.string());
    }

    if (!opts_.responder_command.empty()) {
        std::string cmd = opts_.responder_command;
        replace_all(cmd, "{requests}", shell_quote(req.string()));
        replace_all(cmd, "{responses}", shell_quote(resp.string()));
        cmd = "REQUESTS=" + shell_quote(req.string()) + " RESPONSES=" + shell_quote(resp.string()) +
              "; export REQUESTS RESPONSES; " + cmd;
        const int rc = std::system(cmd.c_str());
        if (rc != 0)
            throw TransportError("responder command exited with status " + std::to_string(rc));
    }

    // Responders without a command are expected to create the response file atomically.
    const auto deadline = std::chrono::steady_clock::now() + opts_.timeout;
    while (!fs::exists(resp)) {
        if (std::chrono::steady_clock::now() >= deadline)
            throw TransportError("timeout waiting for " + resp.string(), true);
        std::this_thread::sleep_for(opts_.poll_interval);
    }
    std::ifstream in(resp, std::ios::binary);
    if (!in) throw TransportError("cannot read response file " + resp.string(), true);
    return read_responses(in);
}

// ---------------------------------------------------------------------------
// HTTP
// ---------------------------------------------------------------------------

HttpTransport::HttpTransport(Options opts) : opts_(std::move(opts)) {
    const auto scheme_end = opts_.url.find("://");
    if (scheme_end == std::string::npos)
        throw ContractError("endpoint url needs a scheme: " + opts_.url);
    const auto path_start = opts_.url.find('/', scheme_end + 3);
    scheme_host_port_ = opts_.url.substr(0, path_start);
    path_ = path_start == std::string::npos ? "/" : opts_.url.substr(path_start);
}

std::vector<InferenceResponse> HttpTransport::exchange(std::span<const InferenceRequest> batch) {
    httplib::Client cli(scheme_host_port_);
    cli.set_connection_timeout(opts_.connect_timeout);
    cli.set_read_timeout(opts_.read_timeout);
    httplib::Headers headers;
    if (!opts_.bearer_token.empty())
        headers.emplace("Authorization", "Bearer " + opts_.bearer_token);

    json body = json::array();
    for (const auto& r : batch) body.push_back(to_json(r));
    auto res = cli.Post(path_, headers, body.dump(), "application/json");
    if (!res)
        throw TransportError("POST " + opts_.url + " failed: " + httplib::to_string(res.error()),
                             true);
    if (res->status < 200 || res->status >= 300) {
        const bool transient = res->status >= 500 || res->status == 408 || res->status == 429;
        throw TransportError("POST " + opts_.url + " returned HTTP " + std::to_string(res->status),
                             transient);
    }
    json j;
    try {
        j = json::parse(res->body);
    } catch (const json::exception& ex) {
        throw TransportError(std::string("malformed response body: ") + ex.what());
    }
    if (!j.is_array()) throw TransportError("malformed response: expected a JSON array");
    std::vector<InferenceResponse> out;
    out.reserve(j.size());
    for (const auto& item : j) out.push_back(response_from_json(item));
    return out;
}

// ---------------------------------------------------------------------------
// Batch submission
// ---------------------------------------------------------------------------

namespace {

std::vector<InferenceResponse> with_retry(Transport& t, std::span<const InferenceRequest> batch,
                                          const RetryPolicy& policy) {
    auto backoff = policy.initial_backoff;
    for (int attempt = 1;; ++attempt) {
        try {
            return t.exchange(batch);
        } catch (const TransportError& ex) {
            if (!ex.transient() || attempt >= policy.attempts) throw;
        }
        if (policy.sleep)
            policy.sleep(backoff);
        else
            std::this_thread::sleep_for(backoff);
        backoff *= 2;
    }
}

std::string join_ids(const std::vector<std::string>& ids) {
    std::string out;
    for (const auto& id : ids) {
        if (!out.empty()) out += ",";
        out += id;
    }
    return out;
}

}  // namespace

std::vector<metrics::Prediction> submit_batch(std::span<const InferenceRequest> requests,
                                              Transport& transport, const SubmitOptions& opts) {
    std::unordered_map<std::string, std::size_t> position;
    for (std::size_t i = 0; i < requests.size(); ++i)
        if (!position.emplace(requests[i].qa_id, i).second)
            throw ContractError("duplicate qa_id in request batch: " + requests[i].qa_id);

    const std::size_t shard = opts.shard_size ? opts.shard_size : std::max<std::size_t>(requests.size(), 1);
    std::vector<std::span<const InferenceRequest>> shards;
    for (std::size_t i = 0; i < requests.size(); i += shard)
        shards.push_back(requests.subspan(i, std::min(shard, requests.size() - i)));

    std::vector<std::vector<InferenceResponse>> results(shards.size());
    const std::size_t width = std::max<std::size_t>(opts.max_concurrency, 1);
    for (std::size_t start = 0; start < shards.size(); start += width) {
        std::vector<std::future<std::vector<InferenceResponse>>> wave;
        const std::size_t end = std::min(shards.size(), start + width);
        for (std::size_t s = start; s < end; ++s)
            wave.push_back(std::async(std::launch::async, [&, s] {
                return with_retry(transport, shards[s], opts.retry);
            }));
        for (std::size_t s = start; s < end; ++s) results[s] = wave[s - start].get();
    }

    std::vector<std::optional<std::string>> answers(requests.size());
    std::vector<std::string> unknown, duplicate, missing;
    for (auto& batch : results)
        for (auto& r : batch) {
            const auto it = position.find(r.qa_id);
            if (it == position.end()) {
                unknown.push_back(r.qa_id);
                continue;
            }
            auto& slot = answers[it->second];
            if (slot) {
                duplicate.push_back(r.qa_id);
                continue;
            }
            slot = std::move(r.answer);
        }
    if (!duplicate.empty())
        throw TransportError("malformed response: duplicate qa_id " + join_ids(duplicate));
    if (!unknown.empty())
        throw TransportError("malformed response: unrequested qa_id " + join_ids(unknown));
    for (std::size_t i = 0; i < requests.size(); ++i)
        if (!answers[i]) missing.push_back(requests[i].qa_id);
    if (!missing.empty()) throw TransportError("missing predictions for qa_id " + join_ids(missing));

    std::vector<metrics::Prediction> out;
    out.reserve(requests.size());
    for (std::size_t i = 0; i < requests.size(); ++i)
        out.push_back({requests[i].qa_id, std::move(*answers[i]), opts.run_id});
    return out;
}

// ---------------------------------------------------------------------------
// Oracles
// ---------------------------------------------------------------------------

OracleKind parse_oracle_kind(std::string_view s) {
    if (s == "echo_gt") return OracleKind::echo_gt;
    if (s == "constant") return OracleKind::constant;
    if (s == "lookup") return OracleKind::lookup;
    if (s == "expert_threshold") return OracleKind::expert_threshold;
    throw ContractError("unknown oracle kind: " + std::string(s));
}

std::string_view to_string(OracleKind k) {
    switch (k) {
        case OracleKind::echo_gt: return "echo_gt";
        case OracleKind::constant: return "constant";
        case OracleKind::lookup: return "lookup";
        case OracleKind::expert_threshold: return "expert_threshold";
    }
    return "?";
}

std::map<std::string, std::string> OracleSpec::default_synonyms() {
    return {
        {"enlarged heart", "cardiomegaly"},
        {"heart enlargement", "cardiomegaly"},
        {"enlarged cardiac silhouette", "cardiomegaly"},
        {"pleural effusion", "effusion"},
        {"opacity", "lung_opacity"},
        {"opacities", "lung_opacity"},
        {"infiltrate", "infiltration"},
        {"lesion", "lung_lesion"},
        {"enlarged cardiomediastinum", "enlarged_cardiomediastinum"},
        {"enlargement of the cardiac silhouette", "cardiomegaly"},
        {"pulmonary edema", "edema"},
    };
}

namespace {

// Normalized question: tokens joined by single spaces, padded with a leading space.
std::string normalized_question(std::string_view q) {
    std::string out;
    for (const auto& t : metrics::tokenize(q)) {
        out += ' ';
        out += t;
    }
    out += ' ';
    return out;
}

bool matches_at_word(const std::string& hay, const std::string& phrase) {
    const std::string needle = " " + phrase;
    for (std::size_t pos = hay.find(needle); pos != std::string::npos;
         pos = hay.find(needle, pos + 1)) {
        const std::size_t end = pos + needle.size();
        if (hay.compare(end, 1, " ") == 0) return true;
        if (hay.compare(end, 2, "s ") == 0) return true;
        if (hay.compare(end, 3, "es ") == 0) return true;
    }
    return false;
}

}  // namespace

std::optional<std::string> extract_condition(std::string_view question,
                                             const std::map<std::string, std::string>& synonyms) {
    const std::string hay = normalized_question(question);
    std::size_t best_len = 0;
    std::size_t best_rank = kNumConditions;
    std::optional<std::string> best;
    auto consider = [&](const std::string& phrase, std::string_view key) {
        const auto rank = condition_index(key);
        if (!rank) throw ContractError("synonym maps to unknown condition: " + std::string(key));
        if (phrase.empty() || !matches_at_word(hay, phrase)) return;
        if (phrase.size() > best_len || (phrase.size() == best_len && *rank < best_rank)) {
            best_len = phrase.size();
            best_rank = *rank;
            best = std::string(key);
        }
    };
    for (std::string_view key : kConditions) consider(condition_phrase(key), key);
    for (const auto& [phrase, key] : synonyms) consider(text::lower(phrase), key);
    return best;
}

std::vector<metrics::Prediction> run_oracle(const OracleSpec& spec, std::span<const QARecord> qas,
                                            std::span<const ExpertPrediction> experts,
                                            const std::string& run_id) {
    std::vector<metrics::Prediction> out;
    out.reserve(qas.size());

    std::unordered_map<std::string, const ExpertPrediction*> expert_by_image;
    if (spec.kind == OracleKind::expert_threshold) {
        for (const auto& e : experts) expert_by_image.emplace(e.image_id, &e);
        for (const auto& qa : qas)
            if (!expert_by_image.contains(qa.image_id))
                throw ContractError("no expert prediction for image " + qa.image_id);
    }

    for (const auto& qa : qas) {
        std::string answer;
        switch (spec.kind) {
            case OracleKind::echo_gt: answer = qa.answer; break;
            case OracleKind::constant: answer = spec.constant_text; break;
            case OracleKind::lookup: {
                const auto it = spec.lookup.find(qa.qa_id);
                if (it == spec.lookup.end())
                    throw ContractError("lookup oracle has no answer for qa " + qa.qa_id);
                answer = it->second;
                break;
            }
            case OracleKind::expert_threshold: {
                answer = kNotApplicable;
                const bool applies = qa.openness == Openness::closed &&
                                     (qa.category == QACategory::abnormality ||
                                      qa.category == QACategory::presence);
                if (!applies) break;
                const auto& pred = *expert_by_image.at(qa.image_id);
                if (const auto cond = extract_condition(qa.question, spec.synonyms)) {
                    answer = pred.prob(*cond) >= spec.threshold ? "yes" : "no";
                } else if (spec.generic_abnormality &&
                           normalized_question(qa.question).find(" abnormal") != std::string::npos) {
                    const bool any = std::any_of(pred.disease_probs.begin(), pred.disease_probs.end(),
                                                 [&](double p) { return p >= spec.threshold; });
                    answer = any ? "yes" : "no";
                }
                break;
            }
        }
        out.push_back({qa.qa_id, std::move(answer), run_id});
    }
    return out;
}

}  // namespace cxrkit::client

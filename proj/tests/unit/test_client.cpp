#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <mutex>
#include <sstream>
#include <thread>

#include <unistd.h>

#include <httplib.h>
#include <json.hpp>

#include "cxrkit/client.hpp"
#include "cxrkit/error.hpp"
#include "oracles.hpp"

using namespace cxrkit;
using namespace cxrkit::client;
namespace fs = std::filesystem;

namespace {

std::vector<InferenceRequest> requests(int n) {
    std::vector<InferenceRequest> out;
    for (int i = 0; i < n; ++i)
        out.push_back({"q" + std::to_string(i), "img.jpg", "question " + std::to_string(i) + "?"});
    return out;
}

// Answers "a:<qa_id>" for every request, optionally mangling the reply.
class FakeTransport : public Transport {
public:
    std::function<void(std::vector<InferenceResponse>&)> mangle;
    int fail_first = 0;
    bool transient = true;
    int calls = 0;
    std::vector<std::size_t> batch_sizes;

    std::vector<InferenceResponse> exchange(std::span<const InferenceRequest> batch) override {
        std::lock_guard lock(mu_);
        ++calls;
        batch_sizes.push_back(batch.size());
        if (fail_first > 0) {
            --fail_first;
            throw TransportError("simulated failure", transient);
        }
        std::vector<InferenceResponse> out;
        for (auto it = batch.rbegin(); it != batch.rend(); ++it) out.push_back({it->qa_id, "a:" + it->qa_id});
        if (mangle) mangle(out);
        return out;
    }

private:
    std::mutex mu_;
};

SubmitOptions no_sleep(std::vector<std::chrono::milliseconds>* slept = nullptr) {
    SubmitOptions o;
    o.retry.sleep = [slept](std::chrono::milliseconds d) {
        if (slept) slept->push_back(d);
    };
    return o;
}

std::string transport_error(const std::function<void()>& f) {
    try {
        f();
    } catch (const TransportError& e) {
        return e.what();
    }
    return {};
}

fs::path scratch(const std::string& name) {
    const auto p = fs::temp_directory_path() / ("cxrkit_client_" + name + "_" + std::to_string(::getpid()));
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

QARecord qa(const std::string& id, const std::string& img, QACategory c, const std::string& q,
            const std::string& a) {
    QARecord r;
    r.qa_id = id;
    r.image_id = img;
    r.category = c;
    r.question = q;
    r.answer = a;
    r.openness = classify_openness(a);
    return r;
}

}  // namespace

TEST_CASE("submit_batch: one prediction per request in request order") {
    FakeTransport t;
    const auto reqs = requests(3);
    auto o = no_sleep();
    o.run_id = "sys/run_1";
    const auto preds = submit_batch(reqs, t, o);
    REQUIRE(preds.size() == 3);
    for (int i = 0; i < 3; ++i) {
        CHECK(preds[i].qa_id == reqs[i].qa_id);
        CHECK(preds[i].answer_text == "a:" + reqs[i].qa_id);
        CHECK(preds[i].run_id == "sys/run_1");
    }
}

TEST_CASE("submit_batch: dropped id is reported by name") {
    FakeTransport t;
    t.mangle = [](auto& out) {
        out.erase(std::remove_if(out.begin(), out.end(), [](auto& r) { return r.qa_id == "q1"; }), out.end());
    };
    const auto msg = transport_error([&] { submit_batch(requests(3), t, no_sleep()); });
    CHECK(msg.find("missing") != std::string::npos);
    CHECK(msg.find("q1") != std::string::npos);
}

TEST_CASE("submit_batch: duplicate or unrequested ids are malformed responses") {
    FakeTransport dup;
    dup.mangle = [](auto& out) { out.push_back(out.front()); };
    CHECK(transport_error([&] { submit_batch(requests(3), dup, no_sleep()); }).find("duplicate") !=
          std::string::npos);

    FakeTransport extra;
    extra.mangle = [](auto& out) { out.push_back({"zz", "?"}); };
    CHECK(transport_error([&] { submit_batch(requests(3), extra, no_sleep()); }).find("zz") !=
          std::string::npos);
}

TEST_CASE("submit_batch: duplicate request ids are a contract violation") {
    FakeTransport t;
    auto reqs = requests(2);
    reqs[1].qa_id = reqs[0].qa_id;
    CHECK_THROWS_AS(submit_batch(reqs, t, no_sleep()), ContractError);
}

TEST_CASE("submit_batch: transient failures retried with doubling backoff") {
    FakeTransport t;
    t.fail_first = 2;
    std::vector<std::chrono::milliseconds> slept;
    const auto preds = submit_batch(requests(2), t, no_sleep(&slept));
    CHECK(preds.size() == 2);
    CHECK(t.calls == 3);
    REQUIRE(slept.size() == 2);
    CHECK(slept[0] == std::chrono::milliseconds(1000));
    CHECK(slept[1] == std::chrono::milliseconds(2000));
}

TEST_CASE("submit_batch: gives up after three attempts, no retry for permanent errors") {
    FakeTransport t;
    t.fail_first = 3;
    CHECK_THROWS_AS(submit_batch(requests(2), t, no_sleep()), TransportError);
    CHECK(t.calls == 3);

    FakeTransport p;
    p.fail_first = 1;
    p.transient = false;
    CHECK_THROWS_AS(submit_batch(requests(2), p, no_sleep()), TransportError);
    CHECK(p.calls == 1);
}

TEST_CASE("submit_batch: sharding preserves order and covers every request") {
    FakeTransport t;
    auto o = no_sleep();
    o.shard_size = 4;
    o.max_concurrency = 3;
    const auto reqs = requests(18);
    const auto preds = submit_batch(reqs, t, o);
    REQUIRE(preds.size() == 18);
    for (std::size_t i = 0; i < 18; ++i) CHECK(preds[i].qa_id == reqs[i].qa_id);
    CHECK(t.calls == 5);
    for (auto s : t.batch_sizes) CHECK(s <= 4);
}

TEST_CASE("line codecs round trip") {
    const auto reqs = requests(3);
    std::stringstream a;
    write_requests(a, reqs);
    CHECK(read_requests(a) == reqs);
    const std::vector<InferenceResponse> resps = {{"q1", "yes"}, {"q2", "multi\nline"}};
    std::stringstream b;
    write_responses(b, resps);
    CHECK(read_responses(b) == resps);
    std::stringstream bad("{\"answer\":\"x\"}\n");
    CHECK_THROWS_AS(read_responses(bad), TransportError);
}

TEST_CASE("file exchange with a responder command") {
    const auto dir = scratch("file");
    const auto script = dir / "respond.py";
    {
        std::ofstream s(script);
        s << "import json, os\n"
             "with open(os.environ['REQUESTS']) as f, open(os.environ['RESPONSES'] + '.tmp', 'w') as g:\n"
             "    for line in f:\n"
             "        r = json.loads(line)\n"
             "        g.write(json.dumps({'qa_id': r['qa_id'], 'answer': 'echo ' + r['prompt']}) + '\\n')\n"
             "os.rename(os.environ['RESPONSES'] + '.tmp', os.environ['RESPONSES'])\n";
    }
    FileExchangeTransport t({dir / "x", "python3 " + script.string(), std::chrono::seconds(30),
                             std::chrono::milliseconds(10)});
    const auto reqs = requests(3);
    const auto preds = submit_batch(reqs, t, no_sleep());
    REQUIRE(preds.size() == 3);
    CHECK(preds[2].answer_text == "echo question 2?");
    CHECK(fs::exists(dir / "x" / "requests-0.jsonl"));
    fs::remove_all(dir);
}

TEST_CASE("file exchange times out without a responder") {
    const auto dir = scratch("timeout");
    FileExchangeTransport t({dir, "", std::chrono::milliseconds(50), std::chrono::milliseconds(10)});
    try {
        t.exchange(requests(1));
        FAIL("expected timeout");
    } catch (const TransportError& e) {
        CHECK(e.transient());
    }
    fs::remove_all(dir);
}

TEST_CASE("HTTP transport against a local server") {
    httplib::Server svr;
    std::string seen_auth;
    std::mutex mu;
    int posts = 0;
    svr.Post("/infer", [&](const httplib::Request& req, httplib::Response& res) {
        std::lock_guard lock(mu);
        ++posts;
        seen_auth = req.get_header_value("Authorization");
        if (posts == 1) {
            res.status = 503;
            return;
        }
        auto body = nlohmann::json::parse(req.body);
        nlohmann::json out = nlohmann::json::array();
        for (const auto& r : body) out.push_back({{"qa_id", r["qa_id"]}, {"answer", "no"}});
        res.set_content(out.dump(), "application/json");
    });
    svr.Post("/broken", [](const httplib::Request&, httplib::Response& res) {
        res.set_content("{\"not\":\"an array\"}", "application/json");
    });
    const int port = svr.bind_to_any_port("127.0.0.1");
    std::thread th([&] { svr.listen_after_bind(); });
    svr.wait_until_ready();

    HttpTransport t({"http://127.0.0.1:" + std::to_string(port) + "/infer", "secret",
                     std::chrono::seconds(5), std::chrono::seconds(5)});
    std::vector<std::chrono::milliseconds> slept;
    const auto preds = submit_batch(requests(4), t, no_sleep(&slept));
    CHECK(preds.size() == 4);
    CHECK(preds[3].answer_text == "no");
    CHECK(slept.size() == 1);
    CHECK(seen_auth == "Bearer secret");

    HttpTransport broken({"http://127.0.0.1:" + std::to_string(port) + "/broken", "",
                          std::chrono::seconds(5), std::chrono::seconds(5)});
    CHECK_THROWS_AS(submit_batch(requests(1), broken, no_sleep()), TransportError);

    svr.stop();
    th.join();
}

TEST_CASE("extract_condition: longest match, plurals, synonyms") {
    const auto syn = OracleSpec::default_synonyms();
    CHECK(extract_condition("is there cardiomegaly?", syn) == "cardiomegaly");
    CHECK(extract_condition("is there evidence of lung opacity?", syn) == "lung_opacity");
    CHECK(extract_condition("are there nodules?", syn) == "nodule");
    CHECK(extract_condition("is there an enlarged heart?", syn) == "cardiomegaly");
    CHECK(extract_condition("is there a pleural effusion?", syn) == "effusion");
    CHECK(extract_condition("is there enlarged cardiomediastinum?", syn) == "enlarged_cardiomediastinum");
    CHECK_FALSE(extract_condition("which view is this?", syn));
    CHECK_FALSE(extract_condition("is there a massive thing?", syn));
}

TEST_CASE("run_oracle: echo, constant, lookup") {
    const std::vector<QARecord> qas = {qa("1", "a", QACategory::presence, "is there edema?", "yes"),
                                       qa("2", "a", QACategory::level, "how severe?", "mild")};
    OracleSpec echo;
    const auto e = run_oracle(echo, qas, {}, "r");
    CHECK(e[0].answer_text == "yes");
    CHECK(e[1].answer_text == "mild");
    CHECK(e[0].run_id == "r");

    OracleSpec c;
    c.kind = OracleKind::constant;
    c.constant_text = "yes";
    CHECK(run_oracle(c, qas)[1].answer_text == "yes");

    OracleSpec l;
    l.kind = OracleKind::lookup;
    l.lookup = {{"1", "no"}};
    CHECK_THROWS_AS(run_oracle(l, qas), ContractError);
    l.lookup["2"] = "moderate";
    CHECK(run_oracle(l, qas)[1].answer_text == "moderate");
}

TEST_CASE("run_oracle: expert threshold") {
    ExpertPrediction p;
    p.image_id = "a";
    p.disease_probs.fill(0.1);
    p.disease_probs[*condition_index("cardiomegaly")] = 0.82;
    const std::vector<ExpertPrediction> ex = {p};
    const std::vector<QARecord> qas = {
        qa("1", "a", QACategory::presence, "is there cardiomegaly?", "yes"),
        qa("2", "a", QACategory::presence, "is there edema?", "yes"),
        qa("3", "a", QACategory::abnormality, "is there any abnormality?", "yes"),
        qa("4", "a", QACategory::view, "is this a frontal view?", "yes"),
        qa("5", "a", QACategory::abnormality, "what abnormalities are seen?", "cardiomegaly"),
        qa("6", "a", QACategory::presence, "is there something odd?", "no")};
    OracleSpec s;
    s.kind = OracleKind::expert_threshold;
    const auto out = run_oracle(s, qas, ex);
    CHECK(out[0].answer_text == "yes");
    CHECK(out[1].answer_text == "no");
    CHECK(out[2].answer_text == "yes");
    CHECK(out[3].answer_text == kNotApplicable);
    CHECK(out[4].answer_text == kNotApplicable);
    CHECK(out[5].answer_text == kNotApplicable);

    s.generic_abnormality = false;
    CHECK(run_oracle(s, qas, ex)[2].answer_text == kNotApplicable);

    CHECK_THROWS_AS(run_oracle(s, qas, {}), ContractError);
    CHECK(run_oracle(s, qas, ex) == run_oracle(s, qas, ex));
}

TEST_CASE("oracle kind names") {
    for (auto k : {OracleKind::echo_gt, OracleKind::constant, OracleKind::lookup, OracleKind::expert_threshold})
        CHECK(parse_oracle_kind(to_string(k)) == k);
    CHECK_THROWS_AS(parse_oracle_kind("magic"), ContractError);
}

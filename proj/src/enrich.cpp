#include "cxrkit/enrich.hpp"

#include <cmath>

#include "cxrkit/error.hpp"

namespace cxrkit::enrich {

std::string_view to_string(Speaker s) { return s == Speaker::human ? "human" : "assistant"; }

std::string_view to_string(Variant v) { return v == Variant::basic ? "basic" : "enhanced"; }

Variant parse_variant(std::string_view s) {
    if (s == "basic") return Variant::basic;
    if (s == "enhanced") return Variant::enhanced;
    throw ContractError("unknown variant: " + std::string(s));
}

ContextPlacement parse_placement(std::string_view s) {
    if (s == "every_turn" || s == "per_turn") return ContextPlacement::every_turn;
    if (s == "first_turn") return ContextPlacement::first_turn;
    throw ContractError("unknown context placement: " + std::string(s));
}

std::string_view to_string(ContextPlacement p) {
    return p == ContextPlacement::every_turn ? "every_turn" : "first_turn";
}

std::vector<std::string_view> positive_findings(const ExpertPrediction& pred, double threshold) {
    std::vector<std::string_view> out;
    for (std::size_t i = 0; i < kNumConditions; ++i)
        if (pred.disease_probs[i] >= threshold) out.push_back(kConditions[i]);
    return out;
}

long rounded_age(double age_years) { return static_cast<long>(std::floor(age_years + 0.5)); }

ExpertContext render_expert_context(const ExpertPrediction& pred, double threshold) {
    if (!(threshold >= 0.0 && threshold <= 1.0))
        throw ContractError("threshold outside [0,1]: " + std::to_string(threshold));

    std::string findings;
    for (std::string_view c : positive_findings(pred, threshold)) {
        if (!findings.empty()) findings += ", ";
        findings += condition_phrase(c);
    }
    if (findings.empty()) findings = "no positive findings";

    std::string text = "Expert model predictions — findings: ";
    text += findings;
    text += "; age: " + std::to_string(rounded_age(pred.age_years)) + " years";
    text += "; race: ";
    text += to_string(pred.race);
    text += "; view: ";
    text += to_string(pred.view);
    text += ".";
    return ExpertContext{std::move(text), pred, threshold};
}

std::string compose_prompt(std::string_view context, std::string_view question) {
    if (context.empty()) return std::string(question);
    std::string out(context);
    out += '\n';
    out += question;
    return out;
}

std::string_view strip_image_token(std::string_view turn, std::string_view image_token) {
    if (image_token.empty()) return turn;
    if (turn.substr(0, image_token.size()) != image_token) return turn;
    turn.remove_prefix(image_token.size());
    if (!turn.empty() && turn.front() == '\n') turn.remove_prefix(1);
    return turn;
}

namespace {

void check_inputs(const ImageRecord& image, std::span<const QARecord> qas) {
    if (qas.empty()) throw ContractError("no QA pairs for image " + image.image_id);
    for (const auto& qa : qas)
        if (qa.image_id != image.image_id)
            throw ContractError("QA " + qa.qa_id + " references image " + qa.image_id +
                                ", expected " + image.image_id);
}

InstructionRecord assemble(const ImageRecord& image, std::span<const QARecord> qas,
                           std::string_view context, Variant variant, const BuildOptions& opts) {
    check_inputs(image, qas);
    InstructionRecord rec;
    rec.id = image.image_id;
    rec.image_id = image.image_id;
    rec.variant = variant;
    rec.turns.reserve(2 * qas.size());
    for (std::size_t t = 0; t < qas.size(); ++t) {
        const bool with_context =
            opts.placement == ContextPlacement::every_turn || t == 0;
        std::string human = compose_prompt(with_context ? context : std::string_view{},
                                           qas[t].question);
        if (t == 0 && !opts.image_token.empty()) human = opts.image_token + "\n" + human;
        rec.turns.push_back({Speaker::human, std::move(human)});
        rec.turns.push_back({Speaker::assistant, qas[t].answer});
    }
    return rec;
}

}  // namespace

InstructionRecord build_basic(const ImageRecord& image, std::span<const QARecord> qas,
                              const BuildOptions& opts) {
    return assemble(image, qas, {}, Variant::basic, opts);
}

InstructionRecord build_enhanced(const ImageRecord& image, std::span<const QARecord> qas,
                                 const ExpertContext& ctx, const BuildOptions& opts) {
    if (ctx.source.image_id != image.image_id)
        throw ContractError("expert context rendered for " + ctx.source.image_id +
                            ", not image " + image.image_id);
    return assemble(image, qas, ctx.text, Variant::enhanced, opts);
}

}  // namespace cxrkit::enrich

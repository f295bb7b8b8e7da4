#pragma once

#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "cxrkit/corpus.hpp"

namespace cxrkit::enrich {

inline constexpr std::string_view kTemplateVersion = "expert-context-v1";
inline constexpr double kDefaultThreshold = 0.5;

// Rendered expert summary that is prefixed to human turns of enhanced conversations.
struct ExpertContext {
    std::string text;
    ExpertPrediction source;
    double threshold = kDefaultThreshold;
};

enum class Speaker { human, assistant };
std::string_view to_string(Speaker s);

struct ConversationTurn {
    Speaker speaker = Speaker::human;
    std::string text;
    bool operator==(const ConversationTurn&) const = default;
};

enum class Variant { basic, enhanced };
std::string_view to_string(Variant v);
Variant parse_variant(std::string_view s);

// Where the expert context goes in an enhanced conversation.
enum class ContextPlacement { every_turn, first_turn };
ContextPlacement parse_placement(std::string_view s);
std::string_view to_string(ContextPlacement p);

struct BuildOptions {
    std::string image_token = "<image>";
    ContextPlacement placement = ContextPlacement::every_turn;
};

struct InstructionRecord {
    std::string id;
    std::string image_id;
    std::vector<ConversationTurn> turns;
    Variant variant = Variant::basic;
    bool operator==(const InstructionRecord&) const = default;
};

// Conditions with prob >= threshold, in canonical order.
std::vector<std::string_view> positive_findings(const ExpertPrediction& pred, double threshold);

// Age rounded half-up to whole years.
long rounded_age(double age_years);

ExpertContext render_expert_context(const ExpertPrediction& pred,
                                    double threshold = kDefaultThreshold);

// Human-turn body for one question: "<context>\n<question>", or the bare question when the
// context is empty.
std::string compose_prompt(std::string_view context, std::string_view question);

// The first human turn is the image token, a newline, then the prompt body.
std::string_view strip_image_token(std::string_view turn, std::string_view image_token);

InstructionRecord build_basic(const ImageRecord& image, std::span<const QARecord> qas,
                              const BuildOptions& opts = {});

InstructionRecord build_enhanced(const ImageRecord& image, std::span<const QARecord> qas,
                                 const ExpertContext& ctx, const BuildOptions& opts = {});

}  // namespace cxrkit::enrich

#pragma once

#include <string>
#include <string_view>

// Prompt text shared by generation, dataset rendering, serving and judging.
namespace ragit::prompts {

inline constexpr std::string_view kAnalystRole = "You are an earnings report analyst.";

inline constexpr std::string_view kGenerationTask =
    "Your task is to ask {num_questions_per_chunk} questions to understand a company, its "
    "financial report, and its key financial performance. The questions should be diverse in "
    "nature across the document. Restrict the questions to the context of the information "
    "provided.";

inline constexpr std::string_view kGenerationContextLead = "Context information is below.";

inline constexpr std::string_view kFormatDirective =
    "Return exactly {n} blocks, each formatted as 'i. Q: <question> A: <answer>'.";

// Training record / answering template.
inline constexpr std::string_view kContextHeader = "We have provided context information below.";
inline constexpr std::string_view kDelimiter = "---------------------";  // 21 hyphens
inline constexpr std::string_view kQuestionLead =
    "Given this information, please answer the question: ";  // trailing space is part of it
inline constexpr std::string_view kAnswerLead = "Answer: ";

inline constexpr std::string_view kAnswerSystem =
    "You are an earnings report analyst. Answer only from the provided context. If the context "
    "does not contain the answer, reply with exactly: NOT FOUND";
inline constexpr std::string_view kNotFound = "NOT FOUND";

/// Separator line placed between concatenated retrieved chunks.
inline constexpr std::string_view kChunkSeparator = "* * *";

/// Serving-time prompt: the training template up to and including the
/// answer lead, with no answer.
std::string render_answer_prompt(std::string_view context, std::string_view question);

// Judge prompt, version 1. Section markers are fixed so verdicts stay comparable.
inline constexpr std::string_view kJudgePromptVersion = "judge-v1";
inline constexpr std::string_view kJudgeSystem =
    "You are an impartial grader of answers to financial questions.";
inline constexpr std::string_view kJudgeQuestionTag = "[Question]";
inline constexpr std::string_view kJudgeTruthTag = "[Ground Truth]";
inline constexpr std::string_view kJudgeCandidateTag = "[Candidate]";
inline constexpr std::string_view kJudgeEndTag = "[End]";
inline constexpr std::string_view kJudgeInstruction =
    "Compare the candidate answer with the ground truth for factual correctness. Write a "
    "one-line rationale, then on its own line write 'Score: <n>' where n is an integer from 1 "
    "(worst) to 10 (best).";
inline constexpr std::string_view kJudgeReask =
    "Your reply must end with a line of the form 'Score: <n>' where n is an integer from 1 to "
    "10.";

std::string render_judge_prompt(std::string_view question, std::string_view ground_truth,
                                std::string_view candidate);

}  // namespace ragit::prompts

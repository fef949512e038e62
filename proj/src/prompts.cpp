#include "ragit/prompts.hpp"

namespace ragit::prompts {

std::string render_answer_prompt(std::string_view context, std::string_view question) {
  std::string out;
  out.append(kContextHeader).append("\n");
  out.append(kDelimiter).append("\n");
  out.append(context).append("\n");
  out.append(kDelimiter).append("\n");
  out.append(kQuestionLead).append("\n");
  out.append(question).append("\n");
  out.append("Answer:");
  return out;
}

std::string render_judge_prompt(std::string_view question, std::string_view ground_truth,
                                std::string_view candidate) {
  std::string out;
  out.append(kJudgeQuestionTag).append("\n").append(question).append("\n");
  out.append(kJudgeTruthTag).append("\n").append(ground_truth).append("\n");
  out.append(kJudgeCandidateTag).append("\n").append(candidate).append("\n");
  out.append(kJudgeEndTag).append("\n");
  out.append(kJudgeInstruction);
  return out;
}

}  // namespace ragit::prompts

#pragma once

// Prompt templates from data/prompts, embedded at build time.

namespace cgrag::detail {

extern const char* const kSummarizePrompt;
extern const char* const kAnswerTrueFalsePrompt;
extern const char* const kAnswerMultipleChoicePrompt;
extern const char* const kAnswerGenerativePrompt;

}  // namespace cgrag::detail

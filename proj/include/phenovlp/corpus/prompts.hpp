#pragma once

#include <string>
#include <string_view>

namespace phenovlp::corpus {

// Caption refinement prompt with {main_caption} and {reference_para} slots.
std::string_view caption_refinement_template();
// Box-to-caption alignment prompt with a {caption_text} slot.
std::string_view subfigure_alignment_template();

std::string caption_refinement_prompt(std::string_view main_caption, std::string_view reference_para);
std::string subfigure_alignment_prompt(std::string_view caption_text);

}  // namespace phenovlp::corpus

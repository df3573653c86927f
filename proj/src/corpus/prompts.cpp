#include "phenovlp/corpus/prompts.hpp"

namespace phenovlp::corpus {

namespace {

constexpr std::string_view kRefineTemplate = R"PROMPT(System:
You are a medical AI expert specializing in precise analysis of medical sub-figures. Your task is to create accurate, sub-figure-specific descriptions by carefully distinguishing the unique content of each individual sub-figure.

**You are given:**
1. **Main Caption:**
    ---
    {main_caption}
    ---
2. **Reference Paragraph:**
    ---
    {reference_para}
    ---

**Critical Requirements:**

**Principle 1: Strict Content Separation**
- Each sub-figure must ONLY describe visual elements present in THAT specific sub-figure
- NEVER attribute findings from one sub-figure to another
- If uncertain about which sub-figure contains a specific finding, describe it generally or omit it

**Principle 2: Minimal Shared Context**
- Start with ONLY essential background (1 sentence): patient condition, anatomical region, or study purpose
- Do NOT repeat detailed findings that apply to other sub-figures

**Principle 3: Precise Visual Localization**
- Use positional language: "upper left image shows...", "right panel demonstrates...", "lower image reveals..."
- Reference specific sub-figure identifiers when provided: "Sub-figure A displays...", "Panel B indicates..."

**Step-by-Step Process:**

**Step 1: Sub-figure Mapping**
- Identify each sub-figure using letters (A, B, C), numbers, or position (upper/lower/left/right)
- Note which specific visual content belongs to each sub-figure

**Step 2: Content Allocation**
- Carefully assign each visual finding to its correct sub-figure
- When in doubt, be conservative and describe only what's clearly visible

**Step 3: Focused Description Generation**
For each sub-figure, create descriptions that:
- Begin with minimal essential context only
- Focus exclusively on that sub-figure's unique visual content
- Use precise anatomical and imaging terminology
- Include specific imaging modality and view details
- **Length Constraint: Keep each enhanced_caption under 256 tokens (approximately 150-200 words)**

**Output Format:**
Return a single, valid JSON object. Each key should be the sub-figure identifier ("A", "B", "main", etc.), and the value should be an object containing the `enhanced_caption` and `modality`.

**Example Output Format:** :
```json
{
    "A": {
        "enhanced_caption": "Focused description of sub-figure A content only...",
        "modality": "MRI"
    },
    "B": {
        "enhanced_caption": "Specific description of sub-figure B content only...", 
        "modality": "CT"
    }
}
```
Generate the JSON output now: /no_think
)PROMPT";

constexpr std::string_view kAlignTemplate = R"PROMPT(System: System role (system)
You are an expert in scientific medical imaging text-image alignment. 

Please align the detection boxes in the uploaded object-detection visualization image with the given caption at a precise subfigure- subcaption level.

User role (user)
[Task Description]

Input:
1. Object-detection visualization image: The image contains multiple detection boxes. At the center of each detection box, there is a red rectangular marker, with the detection box identifier displayed inside a circle (in the format 'box_X', where X may be a letter or a number). If there are no detection boxes and corresponding identifiers in the image, it means no objects were detected.
2. An English caption describing the image content: "{caption_text}"

Important notes:
- The image may contain original subfigure labels (such as A, B, C, a, b, c, 1, 2, etc.); these are original labels of the figure.
- The 'box_Z', 'box_Y', 'box_X', etc. inside the red boxes are the detection box identifiers that we need to align; be sure to distinguish them from the original labels.
- The 'Z' in the detection box identifier 'box_Z' does not correspond to the original subfigure labels.

Task requirements:
    1. Carefully identify each detection box identifier inside the circles (in the 'box_X' format).
    2. Observe the specific position of each detection box in the image.
    3. Analyze the content described in the caption.
    4. Based on the actual location and content of each detection box, align it with the most relevant sub-description in the caption.

Alignment principles:
- Use the actual anatomical location and pointing direction of the detection box as the basis, rather than a superficial mapping between letters.
- If multiple detection boxes point to the same anatomical structure or described region, they may correspond to the same caption segment.
- If you cannot determine a matching relationship, mark it as "unknown".

Output format:
Only output the alignment result in JSON format. Do not output any non-JSON explanatory content:
[
    {"bbox_id": "detection box identifier", "caption_chunk": "corresponding original description segment"},
    {"bbox_id": "detection box identifier", "caption_chunk": "corresponding original description segment"},
    ...
]
)PROMPT";

}  // namespace

std::string_view caption_refinement_template() { return kRefineTemplate; }
std::string_view subfigure_alignment_template() { return kAlignTemplate; }

std::string caption_refinement_prompt(std::string_view main_caption, std::string_view reference_para) {
    // Substitute the reference first so a caption containing the literal
    // "{reference_para}" is not expanded.
    std::string out(kRefineTemplate);
    const auto ref_at = out.find("{reference_para}");
    out.replace(ref_at, std::string_view("{reference_para}").size(), reference_para);
    const auto cap_at = out.find("{main_caption}");
    out.replace(cap_at, std::string_view("{main_caption}").size(), main_caption);
    return out;
}

std::string subfigure_alignment_prompt(std::string_view caption_text) {
    std::string out(kAlignTemplate);
    const auto at = out.find("{caption_text}");
    out.replace(at, std::string_view("{caption_text}").size(), caption_text);
    return out;
}

}  // namespace phenovlp::corpus

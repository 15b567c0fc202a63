#pragma once

#include <string>
#include <vector>

#include "slim/data/dataset.hpp"

namespace slim {

struct Caption {
    std::string text;
    std::vector<int> token_ids;
    int bit_cost = 0;  // bits after DEFLATE compression of the UTF-8 text
};

// Fixed word vocabulary shared by the caption generator and the text encoder.
// Id 0 is the null/padding token, 1 the unknown token.
const std::vector<std::string>& caption_vocabulary();
int caption_vocab_size();
std::vector<int> tokenize_caption(const std::string& text);

const std::vector<std::string>& default_class_names();

// Deterministic template caption for the masked content; the mask argument is
// part of the operation contract (degenerate all-zero masks get a fallback
// wording) even though the text is driven by the class name.
Caption make_roi_caption(const LabeledImage& image, const RoIMask& mask, const std::vector<std::string>& class_names);

int caption_bits(const std::string& text);

}  // namespace slim

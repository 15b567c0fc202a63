#include "slim/data/caption.hpp"

#include <sstream>
#include <unordered_map>

#include "slim/core/zlib_util.hpp"

namespace slim {

const std::vector<std::string>& default_class_names() {
    static const std::vector<std::string> names = {"circle", "square",  "triangle", "cross", "ring",
                                                   "stripe", "pillar",  "diamond",  "crossmark", "dots"};
    return names;
}

const std::vector<std::string>& caption_vocabulary() {
    static const std::vector<std::string> vocab = [] {
        std::vector<std::string> v = {"<null>", "<unk>", "a", "photo", "of", "an", "empty", "scene",
                                      "on", "textured", "background"};
        for (const auto& n : default_class_names()) v.push_back(n);
        return v;
    }();
    return vocab;
}

int caption_vocab_size() { return static_cast<int>(caption_vocabulary().size()); }

std::vector<int> tokenize_caption(const std::string& text) {
    static const std::unordered_map<std::string, int> index = [] {
        std::unordered_map<std::string, int> m;
        const auto& v = caption_vocabulary();
        for (size_t i = 0; i < v.size(); ++i) m.emplace(v[i], static_cast<int>(i));
        return m;
    }();
    std::vector<int> ids;
    std::istringstream is(text);
    std::string word;
    while (is >> word) {
        auto it = index.find(word);
        ids.push_back(it == index.end() ? 1 : it->second);
    }
    return ids;
}

int caption_bits(const std::string& text) { return static_cast<int>(deflate_bytes(text).size()) * 8; }

Caption make_roi_caption(const LabeledImage& image, const RoIMask& mask, const std::vector<std::string>& class_names) {
    if (image.label < 0 || image.label >= static_cast<int>(class_names.size()))
        throw std::out_of_range("make_roi_caption: no class name for label " + std::to_string(image.label) + " (" +
                                image.id + ")");
    Caption cap;
    if (mask.values.max() <= 0.0) {
        cap.text = "a photo of an empty scene";
    } else {
        cap.text = "a photo of a " + class_names[static_cast<size_t>(image.label)];
    }
    cap.token_ids = tokenize_caption(cap.text);
    cap.bit_cost = caption_bits(cap.text);
    return cap;
}

}  // namespace slim

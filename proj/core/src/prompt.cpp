#include "peftt/prompt.hpp"

#include <fstream>
#include <sstream>
#include <stdexcept>

namespace peftt {

namespace {

std::string read_file(const std::string& path, const char* what) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error(std::string(what) + ": cannot read " + path);
    std::ostringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

std::string strip(std::string_view s) {
    size_t b = 0, e = s.size();
    while (b < e && (s[b] == ' ' || s[b] == '\t' || s[b] == '\r' || s[b] == '\n')) ++b;
    while (e > b && (s[e - 1] == ' ' || s[e - 1] == '\t' || s[e - 1] == '\r' || s[e - 1] == '\n'))
        --e;
    return std::string(s.substr(b, e - b));
}

}  // namespace

Template Template::parse(const std::string& spec) {
    const std::string mask_ph = "{mask}", text_ph = "{text}";
    const size_t mask_pos = spec.find(mask_ph);
    if (mask_pos == std::string::npos || spec.find(mask_ph, mask_pos + 1) != std::string::npos) {
        throw std::invalid_argument("template: expected exactly one {mask} placeholder in '" +
                                    spec + "'");
    }
    const size_t text_pos = spec.find(text_ph);
    if (text_pos == std::string::npos || spec.find(text_ph, text_pos + 1) != std::string::npos) {
        throw std::invalid_argument("template: expected exactly one {text} placeholder in '" +
                                    spec + "'");
    }
    if (text_pos < mask_pos) {
        throw std::invalid_argument("template: {text} must come after {mask} in '" + spec + "'");
    }
    Template t;
    t.prefix = strip(spec.substr(0, mask_pos));
    t.middle = strip(spec.substr(mask_pos + mask_ph.size(),
                                 text_pos - mask_pos - mask_ph.size()));
    t.suffix = strip(spec.substr(text_pos + text_ph.size()));
    return t;
}

Template Template::load(const std::string& path) {
    return parse(strip(read_file(path, "template")));
}

std::string Template::render(const std::string& text, const std::string& mask_token) const {
    std::string out;
    auto append = [&out](const std::string& part) {
        if (part.empty()) return;
        if (!out.empty()) out.push_back(' ');
        out += part;
    };
    append(prefix);
    append(mask_token);
    append(middle);
    append(text);
    append(suffix);
    return out;
}

Verbalizer Verbalizer::parse(const std::string& file_text) {
    Verbalizer v;
    std::istringstream in(file_text);
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (strip(line).empty()) continue;
        const size_t tab = line.find('\t');
        if (tab == std::string::npos) {
            throw std::invalid_argument("verbalizer: line " + std::to_string(line_no) +
                                        " has no tab separator");
        }
        Entry e;
        e.label_name = strip(line.substr(0, tab));
        std::string rest = line.substr(tab + 1);
        size_t start = 0;
        while (start <= rest.size()) {
            const size_t comma = rest.find(',', start);
            const std::string word =
                strip(rest.substr(start, comma == std::string::npos ? std::string::npos
                                                                    : comma - start));
            if (!word.empty()) e.words.push_back(word);
            if (comma == std::string::npos) break;
            start = comma + 1;
        }
        if (e.label_name.empty() || e.words.empty()) {
            throw std::invalid_argument("verbalizer: line " + std::to_string(line_no) +
                                        " needs a label and at least one word");
        }
        v.entries.push_back(std::move(e));
    }
    if (v.entries.empty()) throw std::invalid_argument("verbalizer: no entries");
    return v;
}

Verbalizer Verbalizer::load(const std::string& path) {
    return parse(read_file(path, "verbalizer"));
}

void Verbalizer::align_to(const std::vector<std::string>& label_names) {
    std::vector<Entry> ordered;
    ordered.reserve(label_names.size());
    for (const std::string& name : label_names) {
        bool found = false;
        for (Entry& e : entries) {
            if (e.label_name == name) {
                ordered.push_back(std::move(e));
                found = true;
                break;
            }
        }
        if (!found) {
            throw std::invalid_argument("verbalizer: no entry for label '" + name + "'");
        }
    }
    if (ordered.size() != entries.size()) {
        throw std::invalid_argument("verbalizer: has entries for labels not in the corpus");
    }
    entries = std::move(ordered);
}

std::vector<int> Verbalizer::bind(Vocabulary& vocab, bool add_missing) {
    std::vector<int> added;
    for (Entry& e : entries) {
        e.word_token_ids.clear();
        for (const std::string& word : e.words) {
            if (vocab.contains(word)) {
                e.word_token_ids.push_back({vocab.id_of(word)});
                continue;
            }
            std::vector<std::string> parts = tokenize(word);
            bool all_known = !parts.empty();
            for (const std::string& p : parts) all_known = all_known && vocab.contains(p);
            if (all_known && parts.size() > 1) {
                std::vector<int> ids;
                for (const std::string& p : parts) ids.push_back(vocab.id_of(p));
                e.word_token_ids.push_back(std::move(ids));
                continue;
            }
            if (!add_missing) {
                throw std::invalid_argument("verbalizer: label word '" + word +
                                            "' is out of vocabulary");
            }
            const std::vector<std::string> one{word};
            added.push_back(vocab.add_tokens(one)[0]);
            e.word_token_ids.push_back({added.back()});
        }
    }
    return added;
}

std::vector<std::vector<int>> Verbalizer::label_word_ids() const {
    std::vector<std::vector<int>> groups;
    groups.reserve(entries.size());
    for (const Entry& e : entries) {
        if (e.word_token_ids.size() != e.words.size()) {
            throw std::logic_error("verbalizer: bind() has not been called");
        }
        std::vector<int> flat;
        for (const auto& ids : e.word_token_ids) flat.insert(flat.end(), ids.begin(), ids.end());
        groups.push_back(std::move(flat));
    }
    return groups;
}

void Verbalizer::save(const std::string& path) const {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("verbalizer: cannot write " + path);
    for (const Entry& e : entries) {
        f << e.label_name << '\t';
        for (size_t i = 0; i < e.words.size(); ++i) {
            if (i) f << ',';
            f << e.words[i];
        }
        f << '\n';
    }
}

WrappedInput wrap(const Template& tmpl, const std::string& text, const Tokenizer& tokenizer,
                  int max_len) {
    const std::vector<int> prefix = tokenizer.encode(tmpl.prefix);
    const std::vector<int> middle = tokenizer.encode(tmpl.middle);
    const std::vector<int> suffix = tokenizer.encode(tmpl.suffix);
    std::vector<int> body = tokenizer.encode(text);

    const int fixed = static_cast<int>(prefix.size() + 1 + middle.size() + suffix.size());
    if (fixed > max_len) {
        throw std::invalid_argument("wrap: template needs " + std::to_string(fixed) +
                                    " positions but max_len is " + std::to_string(max_len) +
                                    "; the mask would be truncated");
    }
    const size_t budget = static_cast<size_t>(max_len - fixed);
    if (body.size() > budget) body.resize(budget);

    WrappedInput w;
    w.token_ids.reserve(static_cast<size_t>(fixed) + body.size());
    w.token_ids.insert(w.token_ids.end(), prefix.begin(), prefix.end());
    w.mask_pos = static_cast<int>(w.token_ids.size());
    w.token_ids.push_back(Vocabulary::mask_id);
    w.token_ids.insert(w.token_ids.end(), middle.begin(), middle.end());
    w.token_ids.insert(w.token_ids.end(), body.begin(), body.end());
    w.token_ids.insert(w.token_ids.end(), suffix.begin(), suffix.end());
    w.pad_mask.assign(w.token_ids.size(), 1);
    return w;
}

Tensor project_verbalizer(const Tensor& vocab_logits, const Verbalizer& verbalizer) {
    return gather_mean_cols(vocab_logits, verbalizer.label_word_ids());
}

int classify(std::span<const float> scores) {
    if (scores.size() < 2) {
        throw std::invalid_argument("classify: need at least 2 class scores, got " +
                                    std::to_string(scores.size()));
    }
    int best = 0;
    for (int i = 1; i < static_cast<int>(scores.size()); ++i) {
        if (scores[static_cast<size_t>(i)] > scores[static_cast<size_t>(best)]) best = i;
    }
    return best;
}

int classify(const Tensor& scores) {
    return classify(std::span<const float>(scores.data().data(), scores.data().size()));
}

}  // namespace peftt

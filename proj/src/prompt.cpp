#include "clipper/prompt.hpp"

#include <fstream>
#include <sstream>

#include "clipper/errors.hpp"
#include "clipper/util/strings.hpp"

namespace clipper {

PromptTemplate::PromptTemplate(std::string body) : body_(std::move(body)) {
    if (body_.empty()) throw TemplateError("empty prompt template");
}

PromptTemplate PromptTemplate::from_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw TemplateError("cannot open template: " + path.string());
    std::ostringstream out;
    out << in.rdbuf();
    return PromptTemplate(out.str());
}

std::string PromptTemplate::render(const std::map<std::string, std::string>& vars) const {
    std::string out = body_;
    for (const auto& [key, value] : vars) {
        out = util::replace_all(std::move(out), "{{" + key + "}}", value);
    }
    std::size_t open = out.find("{{");
    if (open != std::string::npos) {
        std::size_t close = out.find("}}", open);
        std::string placeholder =
            close == std::string::npos ? out.substr(open, 24) : out.substr(open, close - open + 2);
        throw TemplateError("unresolved placeholder " + placeholder);
    }
    return out;
}

}  // namespace clipper

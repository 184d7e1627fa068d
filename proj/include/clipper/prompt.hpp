#pragma once

#include <filesystem>
#include <map>
#include <string>

namespace clipper {

/// Prompt template with {{placeholder}} substitution. Stage prompts live in
/// template files so they can be tuned without rebuilding.
class PromptTemplate {
public:
    explicit PromptTemplate(std::string body);
    static PromptTemplate from_file(const std::filesystem::path& path);

    /// Throws TemplateError if any {{placeholder}} is left unresolved.
    std::string render(const std::map<std::string, std::string>& vars) const;

    const std::string& body() const { return body_; }

private:
    std::string body_;
};

}  // namespace clipper

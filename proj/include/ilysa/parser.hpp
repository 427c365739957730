#pragma once

#include "ilysa/ast.hpp"

namespace ilysa {

struct SourceSpec {
    std::string text;
    std::string path;
};

struct ParseError {
    int line = 0;  // 0 when the error comes from validation rather than a source position
    int column = 0;
    std::string message;
};

class ParseFailure : public Error {
public:
    ParseFailure(std::string path, std::vector<ParseError> errors);
    const std::vector<ParseError>& errors() const { return errors_; }
    const std::string& path() const { return path_; }

private:
    std::string path_;
    std::vector<ParseError> errors_;
};

// Parses and validates; throws ParseFailure on lexical, syntax, arity or well-formedness errors.
System parse_system(const SourceSpec& src);

// Parses without running well_formed (for tests that build deliberately broken systems).
System parse_system_unchecked(const SourceSpec& src);

// Identifiers are read as variables; no signature is consulted.
TermPtr parse_term(const std::string& text);

System load_system(const std::string& path);

}  // namespace ilysa

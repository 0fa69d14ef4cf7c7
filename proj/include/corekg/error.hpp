#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace corekg {

enum class Errc {
  EmptyDocument,
  MissingOpinionSection,
  UnknownTokenizer,
  InvalidArgument,
  TransportError,
  TimeoutError,
  ScriptMiss,
  ScriptParseError,
  TemplateInvalid,
  ResolutionRejected,
  ConfigInvalid,
  EmptyString,
  UnknownMember,
  ZeroNodes,
  DivisionByZero,
  CaseMismatch,
  IoError,
  FormatError,
};

constexpr std::string_view to_string(Errc c) {
  switch (c) {
    case Errc::EmptyDocument: return "EmptyDocument";
    case Errc::MissingOpinionSection: return "MissingOpinionSection";
    case Errc::UnknownTokenizer: return "UnknownTokenizer";
    case Errc::InvalidArgument: return "InvalidArgument";
    case Errc::TransportError: return "TransportError";
    case Errc::TimeoutError: return "TimeoutError";
    case Errc::ScriptMiss: return "ScriptMiss";
    case Errc::ScriptParseError: return "ScriptParseError";
    case Errc::TemplateInvalid: return "TemplateInvalid";
    case Errc::ResolutionRejected: return "ResolutionRejected";
    case Errc::ConfigInvalid: return "ConfigInvalid";
    case Errc::EmptyString: return "EmptyString";
    case Errc::UnknownMember: return "UnknownMember";
    case Errc::ZeroNodes: return "ZeroNodes";
    case Errc::DivisionByZero: return "DivisionByZero";
    case Errc::CaseMismatch: return "CaseMismatch";
    case Errc::IoError: return "IoError";
    case Errc::FormatError: return "FormatError";
  }
  return "Unknown";
}

/// Base exception for every failure raised by the library. `code()` is the
/// stable discriminator; the message is for humans.
class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& message)
      : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code), message_(message) {}

  Errc code() const noexcept { return code_; }
  /// Message without the code prefix.
  const std::string& message() const noexcept { return message_; }

 private:
  Errc code_;
  std::string message_;
};

/// Transport or timeout failure after the retry budget is spent.
class TransportError : public Error {
 public:
  TransportError(Errc code, int attempts, const std::string& message)
      : Error(code, message + " (after " + std::to_string(attempts) + " attempts)"),
        attempts_(attempts) {}

  int attempts() const noexcept { return attempts_; }

 private:
  int attempts_;
};

/// Line-oriented input file failed to parse.
class ParseError : public Error {
 public:
  ParseError(Errc code, std::size_t line, const std::string& message)
      : Error(code, "line " + std::to_string(line) + ": " + message), line_(line) {}

  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

}  // namespace corekg

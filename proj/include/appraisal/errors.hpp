#pragma once

#include <stdexcept>
#include <string>

namespace appraisal {

/// Base for every error raised by the toolkit. The category is a short
/// machine-parseable word ("config", "parse", "data", ...) that the CLI
/// prints ahead of the message.
class Error : public std::runtime_error {
public:
    Error(std::string category, const std::string& message)
        : std::runtime_error(message), category_(std::move(category)) {}

    const std::string& category() const noexcept { return category_; }

private:
    std::string category_;
};

#define APPRAISAL_DEFINE_ERROR(Name, tag)                                   \
    class Name : public Error {                                             \
    public:                                                                 \
        explicit Name(const std::string& message) : Error(tag, message) {}  \
    }

APPRAISAL_DEFINE_ERROR(ConfigError, "config");
APPRAISAL_DEFINE_ERROR(ParseError, "parse");
APPRAISAL_DEFINE_ERROR(DataError, "data");
APPRAISAL_DEFINE_ERROR(LoadError, "load");
APPRAISAL_DEFINE_ERROR(KeyError, "key");
APPRAISAL_DEFINE_ERROR(ShapeError, "shape");
APPRAISAL_DEFINE_ERROR(UsageError, "usage");
APPRAISAL_DEFINE_ERROR(NumericError, "numeric");
APPRAISAL_DEFINE_ERROR(FitError, "fit");
APPRAISAL_DEFINE_ERROR(TrainingError, "training");
APPRAISAL_DEFINE_ERROR(InputError, "input");
APPRAISAL_DEFINE_ERROR(ReportError, "report");

#undef APPRAISAL_DEFINE_ERROR

}  // namespace appraisal

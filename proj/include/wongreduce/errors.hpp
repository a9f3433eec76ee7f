#pragma once

#include <stdexcept>
#include <string>

namespace wongreduce {

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class NotAntisymmetric : public Error {
 public:
  using Error::Error;
};

class JacobiViolation : public Error {
 public:
  using Error::Error;
};

class IndefiniteKilling : public Error {
 public:
  using Error::Error;
};

/// The Faddeev-Popov matrix (or the orbit metric) is singular: the action is not
/// free at the point, or the gauge surface is not transverse to the orbit.
class SingularFP : public Error {
 public:
  SingularFP(const std::string& what, double condition)
      : Error(what), condition_(condition) {}
  double condition() const { return condition_; }

 private:
  double condition_;
};

class NotOnSigma : public Error {
 public:
  NotOnSigma(const std::string& what, double residual) : Error(what), residual_(residual) {}
  double residual() const { return residual_; }

 private:
  double residual_;
};

class IllConditioned : public Error {
 public:
  IllConditioned(const std::string& what, double condition)
      : Error(what), condition_(condition) {}
  double condition() const { return condition_; }

 private:
  double condition_;
};

class NoConvergence : public Error {
 public:
  NoConvergence(const std::string& what, int iterations, double residual)
      : Error(what), iterations_(iterations), residual_(residual) {}
  int iterations() const { return iterations_; }
  double residual() const { return residual_; }

 private:
  int iterations_;
  double residual_;
};

class EigenCrossing : public Error {
 public:
  EigenCrossing(const std::string& what, double overlap) : Error(what), overlap_(overlap) {}
  double overlap() const { return overlap_; }

 private:
  double overlap_;
};

class ChartOutOfRange : public Error {
 public:
  using Error::Error;
};

class StepFailure : public Error {
 public:
  StepFailure(const std::string& what, double t) : Error(what), t_(t) {}
  double time() const { return t_; }

 private:
  double t_;
};

class BlowUp : public StepFailure {
 public:
  using StepFailure::StepFailure;
};

class ConfigInvalid : public Error {
 public:
  ConfigInvalid(const std::string& path, const std::string& key, const std::string& why)
      : Error(path + ": key '" + key + "': " + why), path_(path), key_(key) {}
  const std::string& path() const { return path_; }
  const std::string& key() const { return key_; }

 private:
  std::string path_;
  std::string key_;
};

class MissingArtifact : public Error {
 public:
  using Error::Error;
};

}  // namespace wongreduce

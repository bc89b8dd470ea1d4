"""Exception hierarchy shared across fwforge modules."""


class FwForgeError(Exception):
    """Base class for every error raised deliberately by fwforge."""


# container
class ContainerError(FwForgeError):
    pass


class BadMagic(ContainerError):
    pass


class TruncatedHeader(ContainerError):
    pass


class SizeMismatch(ContainerError):
    pass


class InconsistentHeader(ContainerError):
    pass


class InvariantViolation(ContainerError):
    pass


# keystore
class KeystoreError(FwForgeError):
    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class MalformedLine(KeystoreError):
    pass


class BadHex(KeystoreError):
    pass


class BadIdentifier(KeystoreError):
    pass


class DuplicateVersionLabel(KeystoreError):
    pass


class BadKeyLength(KeystoreError):
    pass


# crypto
class CryptoError(FwForgeError):
    pass


class BadLength(CryptoError):
    pass


class BadPadding(CryptoError):
    pass


# decryptor / packer
class ChunkOutOfBounds(FwForgeError):
    pass


class NameTooLong(FwForgeError):
    pass


# depres
class ElfError(FwForgeError):
    pass


class NotElf(ElfError):
    pass


class MalformedElf(ElfError):
    pass


class MissingDependencies(FwForgeError):
    def __init__(self, names):
        self.names = sorted(names)
        super().__init__("unresolved libraries: " + ", ".join(self.names))


class StagingError(FwForgeError):
    pass


# campaign
class MissingPath(FwForgeError):
    pass

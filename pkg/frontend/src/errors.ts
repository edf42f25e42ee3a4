export class XviewError extends Error {
  constructor(readonly code: string, message: string) {
    super(message);
    this.name = code;
  }
}

export const shapeMismatch = (msg: string) => new XviewError("ShapeMismatch", msg);
export const viewMismatch = (msg: string) => new XviewError("ViewMismatch", msg);
export const truncatedRecord = (msg: string) => new XviewError("TruncatedRecord", msg);
export const nonFiniteValue = (msg: string) => new XviewError("NonFiniteValue", msg);
export const badMagic = (msg: string) => new XviewError("BadMagic", msg);
export const checksumMismatch = (msg: string) => new XviewError("ChecksumMismatch", msg);
export const truncated = (msg: string) => new XviewError("Truncated", msg);
export const missingKey = (msg: string) => new XviewError("MissingKey", msg);
export const malformedNumber = (msg: string) => new XviewError("MalformedNumber", msg);
export const wrongArity = (msg: string) => new XviewError("WrongArity", msg);

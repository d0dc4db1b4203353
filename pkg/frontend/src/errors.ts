export class UnknownBackbone extends Error {}

export class ImageReadError extends Error {}

export class FormatError extends Error {
  /** Byte offset of the failure inside the binary file, when known. */
  offset?: number;

  constructor(message: string, offset?: number) {
    super(offset === undefined ? message : `${message} (at byte ${offset})`);
    this.offset = offset;
  }
}

/**
 * Error passthrough: the toolkit CLI reports failures on stderr as
 * `error: <KindName>: <message>` and exits 1; the bridge rethrows them
 * with the kind preserved so callers can branch on it.
 */

export class EndogeoError extends Error {
  /** Failure taxonomy name, e.g. "ShapeMismatch" or "EmptyOverlap". */
  readonly kind: string;

  constructor(kind: string, message: string) {
    super(message);
    this.name = `EndogeoError(${kind})`;
    this.kind = kind;
  }
}

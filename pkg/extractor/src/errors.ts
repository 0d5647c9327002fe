export class ExtractorError extends Error {}

/** Audio file is malformed or has an unsupported format. */
export class AudioFormatError extends ExtractorError {}

/** Audio is too short to produce even one chunk. */
export class AudioTooShortError extends ExtractorError {}

/** A pretrained encoder cannot be loaded in this environment. */
export class ModelLoadError extends ExtractorError {}

/** Labels CSV or transcript inputs are malformed. */
export class InputError extends ExtractorError {}

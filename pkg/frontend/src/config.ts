/** Build-time configuration. An empty tile URL keeps the map offline:
 * the grid renders over a plain background. */
export const BASEMAP_TILE_URL = "";

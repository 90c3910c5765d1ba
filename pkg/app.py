"""
APLICACIÓN PRINCIPAL (FRONTEND)
Responsabilidad: Orquestar la UI de Streamlit y llamar a los módulos.
No contiene lógica de negocio, solo presentación.
"""
import streamlit as st

from modules.engine import DoseResponseEngine, summarize
from modules.errors import DoseResponseError
from modules.knowledge import CatalogoMetro
from modules.repository import ensure_sample_panel, load_panel_for_run
from modules.svg import render_svg

# --- Configuración de la Página ---
st.set_page_config(page_title="Dosis-Respuesta Bayesiana", layout="wide", page_icon="📈")


# --- Inyección de Dependencias (Carga de Módulos) ---
@st.cache_resource
def cargar_sistema():
    return ensure_sample_panel("datos_panel")


try:
    repo = cargar_sistema()
    path_panel, path_cfg = repo.get_rutas()
    _, run_cfg, _, _ = repo.cargar_datos()
    data, resolved = load_panel_for_run(path_panel, run_cfg)
except DoseResponseError as e:
    st.error(f"Error crítico cargando datos: {e}")
    st.stop()

# --- Interfaz de Usuario ---
st.title("📈 Dosis-Respuesta Bayesiana Longitudinal")
st.markdown("**GPS + GEE con bootstrap Bayesiano o proceso de Dirichlet.**")

# 1. Configuración del estimador
with st.sidebar:
    st.header("🔧 Configuración")
    st.info(f"Panel: {data.n_units} unidades, {data.n_rows} filas")
    st.caption(f"Fuente: {path_panel}")
    catalogo = CatalogoMetro()
    schema = resolved.data_schema
    st.caption(f"Dosis ({schema.dose}): {catalogo.get_concepto(schema.dose)}")
    st.caption(f"Outcome ({schema.outcome}): {catalogo.get_concepto(schema.outcome)}")
    with st.expander("Confusores"):
        for nombre in schema.covariates:
            st.caption(f"{nombre}: {catalogo.get_concepto(nombre)}")

    method = st.selectbox("Método", ["cov", "wor"], index=0)
    resampler = st.selectbox("Remuestreo", ["dp", "bb"], index=0)
    n_draws = st.slider("Draws del posterior (S)", 20, 1000, 200, step=20)
    alpha = st.number_input("Concentración α", min_value=0.1, value=float(resolved.estimator.alpha))
    j_target = st.slider("Truncamiento J", 50, 500, resolved.estimator.j_target, step=50)
    seed = st.number_input("Semilla", min_value=0, value=0, step=1)

est = resolved.estimator.model_copy(
    update={"method": method, "resampler": resampler, "n_draws": n_draws,
            "alpha": alpha, "j_target": j_target, "seed": int(seed)}
)

col1, col2 = st.columns([1, 1])
with col1:
    st.subheader("📂 Grilla de dosis")
    st.write(", ".join(f"{d:.4g}" for d in est.dose_grid))
    if st.button("🚀 Ejecutar Posterior", type="primary"):
        st.session_state["run_analysis"] = True

# 2. Ejecución del flujo
if st.session_state.get("run_analysis"):
    with st.spinner("Muestreando el posterior del APO..."):
        try:
            apo = DoseResponseEngine(est, n_jobs=-1).ejecutar(data)
        except DoseResponseError as e:
            st.error(f"Falló la estimación: {e}")
            st.stop()
        resumen = summarize(apo)

    with col2:
        st.subheader("🔍 Resumen del posterior")
        st.dataframe(resumen, hide_index=True)
        if apo.failures:
            st.warning(f"{len(apo.failures)} draws descartados de {apo.n_draws}")

    st.markdown("---")
    st.subheader("📉 Curva dosis-respuesta")
    svg = render_svg(resumen, f"{method.upper()}-{resampler.upper()}")
    st.markdown(svg.split("\n", 1)[1], unsafe_allow_html=True)
